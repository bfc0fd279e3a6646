"""Transferred-image synthesis: dictionary swap, decode, gradient refinement.

The trained plan turns into a one-to-one transfer function by barycentric
projection: each source atom maps to the plan-weighted average of the target
atoms. Content patches are coded against the original source dictionary and
decoded against the swapped one with the same coefficients, reassembled by
overlap averaging, and optionally refined by a gradient-consistency solve

    (I + rho * L) y = raw + rho * L * content

per channel, where L is the 5-point Laplacian from forward differences with
replicate boundary. The system is symmetric positive definite, so conjugate
gradients handle it at full image size without forming any matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .coding import encode_all
from .dictionary import Dictionary
from .exceptions import ConvergenceWarning
from .patches import Image, PatchSet, dense_grid, reassemble
from .pipeline import TransferModel
from .transport import TransportPlan


@dataclass(frozen=True)
class SwappedDictionary:
    """Barycentric image of a dictionary under a transport plan."""

    atoms: np.ndarray
    source_plan_rows: np.ndarray  # per-atom transported mass


def barycentric_map(
    plan: TransportPlan, dy: Dictionary, fallback: Dictionary | None = None
) -> SwappedDictionary:
    """Map each plan row to the mass-weighted average of dy's atoms.

    Rows carrying no mass copy the corresponding `fallback` atom (the
    original source dictionary) since their average is undefined.
    """
    t = plan.entries
    if t.shape[1] != dy.n_atoms:
        raise ValueError(f"plan has {t.shape[1]} columns but dy has {dy.n_atoms} atoms")
    row_mass = t.sum(axis=1)
    if not np.any(row_mass > 0.0):
        raise ValueError("plan carries no mass")
    safe = np.where(row_mass > 0.0, row_mass, 1.0)
    atoms = (dy.atoms @ t.T) / safe[None, :]
    zero = row_mass == 0.0
    if np.any(zero):
        if fallback is None:
            raise ValueError(
                f"{int(zero.sum())} plan rows carry no mass and no fallback "
                "dictionary was given"
            )
        if fallback.dim != dy.dim or fallback.n_atoms != t.shape[0]:
            raise ValueError("fallback dictionary shape does not match the plan")
        atoms[:, zero] = fallback.atoms[:, zero]
    return SwappedDictionary(atoms=atoms, source_plan_rows=row_mass)


def reconstruct_raw(
    swapped: SwappedDictionary,
    content: Image,
    patch_size: int,
    stride: int,
    omp_tol: float,
    omp_max_atoms: int,
    dx: Dictionary,
) -> Image:
    """Code dense-grid patches against dx, decode against the swapped atoms.

    Coefficients are exactly those of coding against dx; only the decode
    dictionary changes. Overlapping patches are averaged.
    """
    if swapped.atoms.shape != dx.atoms.shape:
        raise ValueError("swapped dictionary shape does not match dx")
    grid = dense_grid(content, patch_size, stride)
    code = encode_all(dx, grid, omp_max_atoms, omp_tol)
    decoded = swapped.atoms @ code.coeffs
    out = PatchSet(decoded, grid.positions, patch_size, content.channels)
    return reassemble(out, content.width, content.height)


def _laplacian(u: np.ndarray) -> np.ndarray:
    """Divergence of forward-difference gradients, replicate boundary."""
    gx = u[:, 1:] - u[:, :-1]
    gy = u[1:, :] - u[:-1, :]
    out = np.zeros_like(u)
    out[:, :-1] -= gx
    out[:, 1:] += gx
    out[:-1, :] -= gy
    out[1:, :] += gy
    return out


def _cg(apply_op, rhs: np.ndarray, x0: np.ndarray, tol: float, max_iters: int):
    """Conjugate gradients on a flattened SPD system; returns (x, converged)."""
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs), True
    x = x0.copy()
    r = rhs - apply_op(x)
    p = r.copy()
    rs = float(r @ r)
    best_x, best_r = x.copy(), np.sqrt(rs)
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol * bnorm:
            return x, True
        ap = apply_op(p)
        alpha = rs / float(p @ ap)
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) < best_r:
            best_x, best_r = x.copy(), np.sqrt(rs_new)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if best_r <= tol * bnorm:
        return best_x, True
    return best_x, False


def gradient_refine(
    raw: Image,
    content: Image,
    rho: float,
    cg_tol: float = 1e-8,
    cg_max_iters: int = 1000,
) -> Image:
    """Blend the decoded image with the content's gradients (per channel).

    rho = 0 returns `raw` unchanged. Non-convergence returns the best
    iterate and emits ConvergenceWarning. Output clamped to [0, 1] last.
    """
    if raw.data.shape != content.data.shape:
        raise ValueError("raw and content images must have identical shape")
    if rho < 0.0:
        raise ValueError("rho must be >= 0")
    if rho == 0.0:
        return raw
    h, w = raw.height, raw.width

    def apply_op(flat: np.ndarray) -> np.ndarray:
        img = flat.reshape(h, w)
        return (img + rho * _laplacian(img)).ravel()

    out = np.empty_like(raw.data)
    for ch in range(raw.channels):
        rhs = raw.data[:, :, ch] + rho * _laplacian(content.data[:, :, ch])
        x, converged = _cg(
            apply_op, rhs.ravel(), raw.data[:, :, ch].ravel(), cg_tol, cg_max_iters
        )
        if not converged:
            warnings.warn(
                f"gradient refinement: channel {ch} CG stopped at "
                f"{cg_max_iters} iterations above tolerance",
                ConvergenceWarning,
                stacklevel=2,
            )
        out[:, :, ch] = x.reshape(h, w)
    return Image(np.clip(out, 0.0, 1.0))


def transfer(
    model: TransferModel,
    content: Image,
    direction: str = "forward",
    stride: int = 4,
    rho: float = 0.01,
) -> Image:
    """Full synthesis: swap, decode on a dense grid, reassemble, refine.

    `forward` renders content in the reference's style; `reverse` uses the
    transposed plan to render in the content's style.
    """
    if content.channels != model.channels:
        raise ValueError(
            f"content has {content.channels} channels but the model was "
            f"trained on {model.channels}"
        )
    if direction == "forward":
        swapped = barycentric_map(model.plan, model.dict_y, fallback=model.dict_x)
        source = model.dict_x
    elif direction == "reverse":
        transposed = TransportPlan(
            np.ascontiguousarray(model.plan.entries.T),
            model.plan.col_marginal,
            model.plan.row_marginal,
        )
        swapped = barycentric_map(transposed, model.dict_x, fallback=model.dict_y)
        source = model.dict_y
    else:
        raise ValueError(f"direction must be 'forward' or 'reverse', got {direction!r}")
    raw = reconstruct_raw(
        swapped,
        content,
        model.config.patch_size,
        stride,
        model.config.omp_tol,
        model.config.omp_max_atoms,
        source,
    )
    return gradient_refine(raw, content, rho)
