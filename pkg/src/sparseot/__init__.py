"""Optimal image transport on sparse dictionaries.

Jointly learns per-image patch dictionaries with transport-regularized
updates, infers an optimal (or entropic) coupling between them, and
synthesizes color / style transferred images by barycentric dictionary swap
with gradient-regularized reconstruction.
"""

from .coding import AtomDistribution, SparseCode, distribution, encode_all, omp, sign_fix
from .dictionary import Dictionary, atlas, init_from_samples, residuals, sweep, update_atom
from .exceptions import (
    AtomUnusedError,
    ConvergenceWarning,
    DegenerateDistributionError,
    DegenerateSupportWarning,
    ModelFormatError,
    NumericFailure,
    TransportSizeError,
    UnsupportedVersionError,
)
from .metrics import edge_ssim, psnr, ssim
from .patches import Image, PatchSet, dense_grid, load_png, reassemble, sample_random, save_png
from .pipeline import (
    FitConfig,
    LossRecord,
    TransferModel,
    export_history_csv,
    fit,
    load_model,
    save_model,
)
from .synthesis import SwappedDictionary, barycentric_map, gradient_refine, reconstruct_raw, transfer
from .transport import TransportPlan, cost_matrix, exact_ot, export_plan_csv, sinkhorn, transport_cost

__version__ = "0.1.0"

__all__ = [
    "AtomDistribution",
    "AtomUnusedError",
    "ConvergenceWarning",
    "DegenerateDistributionError",
    "DegenerateSupportWarning",
    "Dictionary",
    "FitConfig",
    "Image",
    "LossRecord",
    "ModelFormatError",
    "NumericFailure",
    "PatchSet",
    "SparseCode",
    "SwappedDictionary",
    "TransferModel",
    "TransportPlan",
    "TransportSizeError",
    "UnsupportedVersionError",
    "atlas",
    "barycentric_map",
    "cost_matrix",
    "dense_grid",
    "distribution",
    "edge_ssim",
    "encode_all",
    "exact_ot",
    "export_history_csv",
    "export_plan_csv",
    "fit",
    "gradient_refine",
    "init_from_samples",
    "load_model",
    "load_png",
    "omp",
    "psnr",
    "reassemble",
    "reconstruct_raw",
    "residuals",
    "sample_random",
    "save_model",
    "save_png",
    "sign_fix",
    "sinkhorn",
    "ssim",
    "sweep",
    "transfer",
    "transport_cost",
    "update_atom",
]
