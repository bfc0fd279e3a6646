"""Joint training loop: sparse coding, regularized dictionary sweeps, transport.

Block-coordinate descent over the two dictionaries, the two coefficient
matrices, and the coupling between them. A bootstrap pass codes both images
against their freshly sampled dictionaries and solves an initial transport
plan, so the very first dictionary sweep already has a valid plan to pull
against. Each outer iteration then re-codes, sweeps both dictionaries (each
reading the other side's previous-iteration atoms), and re-solves transport.

Loss components per iteration: the two sparse representation errors
|D A - X|_F^2, the two row-sum constraint errors |D a - X 1|^2, and the
transport cost <C, T>. Training stops early once every component's relative
change falls below the configured threshold.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse

from . import coding, dictionary, transport
from .coding import AtomDistribution, SparseCode
from .dictionary import Dictionary
from .exceptions import (
    DegenerateDistributionError,
    ModelFormatError,
    NumericFailure,
    UnsupportedVersionError,
)
from .patches import Image, PatchSet, sample_random
from .transport import TransportPlan


@dataclass(frozen=True)
class FitConfig:
    """Training parameters; defaults suit 512x512 photo pairs."""

    patch_size: int = 16
    sample_count: int = 20000
    dict_size: int = 256
    dict_size_y: int | None = None  # None: same as dict_size
    omp_tol: float = 1e-5
    omp_max_atoms: int = 8
    lam: float = 1.0
    tau: float = 10.0  # recorded for fidelity; marginals are enforced exactly
    gamma: float = 0.05
    eta: float = 0.05
    sinkhorn_iters: int = 200
    outer_iters: int = 50
    rel_loss_stop: float = 1e-3
    seed: int = 0
    exact_ot: bool = False

    def __post_init__(self):
        positive = {
            "patch_size": self.patch_size,
            "sample_count": self.sample_count,
            "dict_size": self.dict_size,
            "omp_max_atoms": self.omp_max_atoms,
            "lam": self.lam,
            "tau": self.tau,
            "gamma": self.gamma,
            "eta": self.eta,
            "sinkhorn_iters": self.sinkhorn_iters,
            "rel_loss_stop": self.rel_loss_stop,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.omp_tol < 0:
            raise ValueError("omp_tol must be >= 0")
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be >= 1")
        if self.dict_size_y is not None and self.dict_size_y < 1:
            raise ValueError("dict_size_y must be >= 1")

    @property
    def dict_size_ref(self) -> int:
        return self.dict_size if self.dict_size_y is None else self.dict_size_y


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    e_sp_x: float
    e_sp_y: float
    e_ot_a: float
    e_ot_b: float
    e_c: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.e_sp_x, self.e_sp_y, self.e_ot_a, self.e_ot_b, self.e_c)


@dataclass(frozen=True)
class TransferModel:
    """Everything the synthesis stage needs, plus the training history."""

    dict_x: Dictionary
    dict_y: Dictionary
    code_x: SparseCode
    code_y: SparseCode
    dist_x: AtomDistribution
    dist_y: AtomDistribution
    plan: TransportPlan
    cost: np.ndarray
    history: tuple[LossRecord, ...]
    config: FitConfig

    @property
    def channels(self) -> int:
        return self.dict_x.dim // (self.config.patch_size**2)


def _solve_plan(cost: np.ndarray, a: np.ndarray, b: np.ndarray, config: FitConfig):
    if config.exact_ot and cost.size <= transport.EXACT_CAP:
        return transport.exact_ot(cost, a, b)
    return transport.sinkhorn(
        cost, a, b, eta=config.eta, max_iters=config.sinkhorn_iters, tol=1e-9
    )


def _code_side(dict_: Dictionary, patches: PatchSet, config: FitConfig):
    code = coding.encode_all(dict_, patches, config.omp_max_atoms, config.omp_tol)
    dict_, code = coding.sign_fix(dict_, code)
    return dict_, code, coding.distribution(code)


def _sp_error(dict_: Dictionary, code: SparseCode, patches: PatchSet) -> float:
    resid = patches.matrix - dict_.atoms @ code.coeffs
    return float(np.sum(resid * resid))


def _ot_error(dict_: Dictionary, raw: np.ndarray, patches: PatchSet) -> float:
    resid = patches.matrix.sum(axis=1) - dict_.atoms @ raw
    return float(resid @ resid)


def fit(
    content: Image,
    reference: Image,
    config: FitConfig = FitConfig(),
    on_iteration: Callable[[LossRecord], None] | None = None,
) -> TransferModel:
    """Train the coupled dictionaries and their transport plan.

    Deterministic for a fixed config.seed; all sub-step seeds derive from it.
    The two sides share each sub-step seed, so identical content and
    reference images train bitwise-identical sides (the self-transfer
    identity) while distinct images are unaffected.
    """
    seeds = np.random.SeedSequence(config.seed).generate_state(
        2 + config.outer_iters
    )
    m, n = config.dict_size, config.dict_size_ref

    px = sample_random(content, config.patch_size, config.sample_count, seeds[0])
    py = sample_random(reference, config.patch_size, config.sample_count, seeds[0])
    dx = dictionary.init_from_samples(px, m, seeds[1])
    dy = dictionary.init_from_samples(py, n, seeds[1])

    # bootstrap: code both sides, then an initial plan before any sweep
    try:
        dx, code_x, dist_x = _code_side(dx, px, config)
        dy, code_y, dist_y = _code_side(dy, py, config)
        cost = transport.cost_matrix(dx, dy)
        plan = _solve_plan(cost, dist_x.prob, dist_y.prob, config)
    except DegenerateDistributionError as exc:
        raise DegenerateDistributionError(f"bootstrap pass: {exc}") from exc
    except NumericFailure as exc:
        raise NumericFailure(f"bootstrap pass: {exc}") from exc

    history: list[LossRecord] = []
    for it in range(config.outer_iters):
        try:
            if it > 0:
                dx, code_x, dist_x = _code_side(dx, px, config)
                dy, code_y, dist_y = _code_side(dy, py, config)
            dx_prev = dx
            dx = dictionary.sweep(
                dx, px, code_x, dist_x.raw, plan.entries, dy,
                config.lam, config.gamma, seeds[2 + it],
            )
            dy = dictionary.sweep(
                dy, py, code_y, dist_y.raw, plan.entries.T, dx_prev,
                config.lam, config.gamma, seeds[2 + it],
            )
            cost = transport.cost_matrix(dx, dy)
            plan = _solve_plan(cost, dist_x.prob, dist_y.prob, config)
        except DegenerateDistributionError as exc:
            raise DegenerateDistributionError(f"iteration {it}: {exc}") from exc
        except NumericFailure as exc:
            raise NumericFailure(f"iteration {it}: {exc}") from exc

        record = LossRecord(
            iteration=it,
            e_sp_x=_sp_error(dx, code_x, px),
            e_sp_y=_sp_error(dy, code_y, py),
            e_ot_a=_ot_error(dx, dist_x.raw, px),
            e_ot_b=_ot_error(dy, dist_y.raw, py),
            e_c=transport.transport_cost(cost, plan),
        )
        history.append(record)
        if on_iteration is not None:
            on_iteration(record)
        if it > 0:
            prev = np.array(history[-2].as_tuple())
            cur = np.array(record.as_tuple())
            rel = np.abs(cur - prev) / np.maximum(np.abs(prev), 1e-30)
            if np.all(rel < config.rel_loss_stop):
                break

    return TransferModel(
        dict_x=dx, dict_y=dy, code_x=code_x, code_y=code_y,
        dist_x=dist_x, dist_y=dist_y, plan=plan, cost=cost,
        history=tuple(history), config=config,
    )


def export_history_csv(history, path) -> None:
    """Loss history as CSV with header iter,E_sp_x,E_sp_y,E_ot_a,E_ot_b,E_c."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "E_sp_x", "E_sp_y", "E_ot_a", "E_ot_b", "E_c"])
        for rec in history:
            writer.writerow(
                [rec.iteration] + [repr(float(v)) for v in rec.as_tuple()]
            )


# ---------------------------------------------------------------------------
# model container: little-endian binary with a dimensions header per array

_MAGIC = b"SOTMODEL"
_VERSION = 1
_DTYPE_F8, _DTYPE_I8 = 0, 1

_CONFIG_INTS = (
    "patch_size", "sample_count", "dict_size", "omp_max_atoms",
    "sinkhorn_iters", "outer_iters", "seed",
)
_CONFIG_FLOATS = ("omp_tol", "lam", "tau", "gamma", "eta", "rel_loss_stop")


def _write_array(fh, arr: np.ndarray) -> None:
    if arr.dtype.kind == "f":
        arr, code = arr.astype("<f8", copy=False), _DTYPE_F8
    else:
        arr, code = arr.astype("<i8", copy=False), _DTYPE_I8
    fh.write(struct.pack("<II", code, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(np.ascontiguousarray(arr).tobytes())


class _Reader:
    def __init__(self, fh):
        self.fh = fh
        self.offset = 0

    def take(self, n: int) -> bytes:
        buf = self.fh.read(n)
        if len(buf) != n:
            raise ModelFormatError(
                f"truncated model file: wanted {n} bytes at byte {self.offset}, "
                f"got {len(buf)}"
            )
        self.offset += n
        return buf

    def array(self) -> np.ndarray:
        at = self.offset
        code, ndim = struct.unpack("<II", self.take(8))
        if code not in (_DTYPE_F8, _DTYPE_I8):
            raise ModelFormatError(f"unknown dtype code {code} at byte {at}")
        if ndim > 4:
            raise ModelFormatError(f"implausible array rank {ndim} at byte {at}")
        shape = struct.unpack(f"<{ndim}Q", self.take(8 * ndim))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        if count > 1 << 34:
            raise ModelFormatError(f"implausible array size {count} at byte {at}")
        dtype = "<f8" if code == _DTYPE_F8 else "<i8"
        data = np.frombuffer(self.take(8 * count), dtype=dtype)
        return data.reshape(shape).copy()


def _write_csc(fh, mat: sparse.csc_array) -> None:
    _write_array(fh, np.asarray(mat.shape, dtype=np.int64))
    _write_array(fh, np.asarray(mat.indptr, dtype=np.int64))
    _write_array(fh, np.asarray(mat.indices, dtype=np.int64))
    _write_array(fh, np.asarray(mat.data, dtype=np.float64))


def _read_csc(reader: _Reader) -> sparse.csc_array:
    at = reader.offset
    shape = reader.array()
    indptr = reader.array()
    indices = reader.array()
    data = reader.array()
    if shape.shape != (2,) or indptr.ndim != 1:
        raise ModelFormatError(f"malformed sparse block at byte {at}")
    return sparse.csc_array(
        (data, indices, indptr), shape=(int(shape[0]), int(shape[1]))
    )


def save_model(model: TransferModel, path) -> None:
    """Serialize a model losslessly (all floats little-endian 64-bit)."""
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        ints = [getattr(cfg, k) for k in _CONFIG_INTS]
        ints.append(-1 if cfg.dict_size_y is None else cfg.dict_size_y)
        ints.append(1 if cfg.exact_ot else 0)
        fh.write(struct.pack(f"<{len(ints)}q", *ints))
        fh.write(struct.pack(f"<{len(_CONFIG_FLOATS)}d",
                             *[getattr(cfg, k) for k in _CONFIG_FLOATS]))
        _write_array(fh, model.dict_x.atoms)
        _write_array(fh, model.dict_y.atoms)
        _write_csc(fh, model.code_x.coeffs)
        _write_csc(fh, model.code_y.coeffs)
        for vec in (model.dist_x.raw, model.dist_x.prob,
                    model.dist_y.raw, model.dist_y.prob):
            _write_array(fh, vec)
        _write_array(fh, model.plan.entries)
        _write_array(fh, model.plan.row_marginal)
        _write_array(fh, model.plan.col_marginal)
        _write_array(fh, model.cost)
        hist = np.array(
            [[r.iteration, *r.as_tuple()] for r in model.history], dtype=np.float64
        ).reshape(len(model.history), 6)
        _write_array(fh, hist)


def load_model(path) -> TransferModel:
    """Read a model written by save_model; bitwise-exact numeric payloads."""
    with open(path, "rb") as fh:
        reader = _Reader(fh)
        magic = reader.take(len(_MAGIC))
        if magic != _MAGIC:
            raise ModelFormatError(f"bad magic {magic!r} at byte 0")
        (version,) = struct.unpack("<I", reader.take(4))
        if version != _VERSION:
            raise UnsupportedVersionError(
                f"model container version {version} not supported (expected {_VERSION})"
            )
        n_ints = len(_CONFIG_INTS) + 2
        ints = struct.unpack(f"<{n_ints}q", reader.take(8 * n_ints))
        floats = struct.unpack(
            f"<{len(_CONFIG_FLOATS)}d", reader.take(8 * len(_CONFIG_FLOATS))
        )
        kwargs = dict(zip(_CONFIG_INTS, ints[: len(_CONFIG_INTS)]))
        kwargs["dict_size_y"] = None if ints[-2] == -1 else int(ints[-2])
        kwargs["exact_ot"] = bool(ints[-1])
        kwargs.update(zip(_CONFIG_FLOATS, floats))
        config = FitConfig(**kwargs)

        dict_x = Dictionary(reader.array())
        dict_y = Dictionary(reader.array())
        code_x = SparseCode(_read_csc(reader))
        code_y = SparseCode(_read_csc(reader))
        dist_x = AtomDistribution(raw=reader.array(), prob=reader.array())
        dist_y = AtomDistribution(raw=reader.array(), prob=reader.array())
        plan = TransportPlan(reader.array(), reader.array(), reader.array())
        cost = reader.array()
        hist = reader.array()
        if hist.ndim != 2 or (hist.size and hist.shape[1] != 6):
            raise ModelFormatError("malformed history block")
        history = tuple(
            LossRecord(int(row[0]), *row[1:]) for row in hist
        )
        extra = fh.read(1)
        if extra:
            raise ModelFormatError(f"trailing bytes at byte {reader.offset}")
    return TransferModel(
        dict_x=dict_x, dict_y=dict_y, code_x=code_x, code_y=code_y,
        dist_x=dist_x, dist_y=dist_y, plan=plan, cost=cost,
        history=history, config=config,
    )
