"""Style dictionaries and their regularized per-atom updates.

The atom update extends the classic K-SVD rank-1 step with two quadratic
regularizers: a row-sum (distribution-consistency) term and a transport term
that pulls each atom toward the plan-weighted atoms of the other dictionary.
All three terms are quadratic in the atom, so the update is the closed-form
stationary point

    d_k = (E_k a^k + lam * s_k * F_k + gamma * Dy t_k)
          / (||a^k||^2 + lam * s_k^2 + gamma * sum(t_k))

with a^k the coefficient row restricted to the signals using atom k, s_k the
raw row sum, and t_k the plan row. Atoms are deliberately not renormalized:
they are the support points of the transport ground cost, and rescaling them
would distort that geometry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .exceptions import AtomUnusedError
from .patches import Image, PatchSet

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .coding import SparseCode

#: atoms whose normalized correlation with a lower-indexed atom exceeds this
#: are replaced by random data samples after a sweep
CORRELATION_LIMIT = 0.99


@dataclass(frozen=True)
class Dictionary:
    """A d x m matrix of atoms (one per column) living in patch space."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.ascontiguousarray(np.asarray(self.atoms, dtype=np.float64))
        if atoms.ndim != 2 or atoms.shape[1] < 1:
            raise ValueError(f"atoms must be a d x m matrix, got shape {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms contain non-finite values")
        atoms.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


def init_from_samples(patches: PatchSet, m: int, seed: int) -> Dictionary:
    """m distinct patch columns, sampled without replacement; seeded."""
    if m < 1:
        raise ValueError("dictionary size must be >= 1")
    if m > patches.count:
        raise ValueError(f"cannot draw {m} distinct atoms from {patches.count} patches")
    rng = np.random.default_rng(seed)
    cols = rng.choice(patches.count, size=m, replace=False)
    return Dictionary(patches.matrix[:, cols])


def residuals(
    dictionary: Dictionary,
    k: int,
    patches: PatchSet,
    code: "SparseCode",
    dist_raw: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Exclusion residuals for atom k.

    Returns (E_k, F_k): E_k is the data residual without atom k's
    contribution, restricted to the columns whose support contains k (zero
    columns if the atom is unused); F_k is the row-sum residual
    X 1 - sum_{j != k} d_j * raw_j.
    """
    if not 0 <= k < dictionary.n_atoms:
        raise ValueError(f"atom index {k} out of range")
    cols = code.columns_using(k)
    sub = code.coeffs[:, cols].toarray() if cols.size else np.zeros((dictionary.n_atoms, 0))
    approx_wo_k = dictionary.atoms @ sub - np.outer(dictionary.atoms[:, k], sub[k, :])
    e_k = patches.matrix[:, cols] - approx_wo_k
    dist_raw = np.asarray(dist_raw, dtype=np.float64)
    f_k = (
        patches.matrix.sum(axis=1)
        - dictionary.atoms @ dist_raw
        + dictionary.atoms[:, k] * dist_raw[k]
    )
    return e_k, f_k


def update_atom(
    k: int,
    e_k: np.ndarray,
    alpha_row_k: np.ndarray,
    f_k: np.ndarray,
    a_k: float,
    t_row_k: np.ndarray,
    other: Dictionary,
    lam: float,
    gamma: float,
) -> np.ndarray:
    """Closed-form minimizer of the regularized rank-1 atom objective.

    `alpha_row_k` holds the coefficients of atom k over the columns of
    `e_k`; `a_k` is the raw row sum; `t_row_k` the transport-plan row.
    """
    alpha_row_k = np.asarray(alpha_row_k, dtype=np.float64).ravel()
    t_row_k = np.asarray(t_row_k, dtype=np.float64).ravel()
    denom = float(alpha_row_k @ alpha_row_k + lam * a_k * a_k + gamma * t_row_k.sum())
    if denom <= 0.0:
        raise AtomUnusedError(f"atom {k}: zero update denominator (unused atom)")
    num = lam * a_k * np.asarray(f_k, dtype=np.float64)
    if alpha_row_k.size:
        num = num + e_k @ alpha_row_k
    if gamma != 0.0:
        num = num + gamma * (other.atoms @ t_row_k)
    return num / denom


def sweep(
    dictionary: Dictionary,
    patches: PatchSet,
    code: "SparseCode",
    dist_raw: np.ndarray,
    plan_rows: np.ndarray,
    other: Dictionary,
    lam: float,
    gamma: float,
    seed: int,
) -> Dictionary:
    """One full pass of sequential atom updates, then degenerate-atom replacement.

    Atoms are updated in index order, each seeing the already-updated earlier
    atoms through the maintained residuals. Afterwards, unused atoms and
    atoms correlating above CORRELATION_LIMIT with a lower-indexed atom are
    replaced by randomly drawn patch columns.
    """
    atoms = dictionary.atoms.copy()
    m = atoms.shape[1]
    dist_raw = np.asarray(dist_raw, dtype=np.float64)
    plan_rows = np.asarray(plan_rows, dtype=np.float64)
    if plan_rows.shape[0] != m or plan_rows.shape[1] != other.n_atoms:
        raise ValueError("plan_rows must be (n_atoms, n_other_atoms)")

    # maintained residuals: R = X - D A over all columns, s = X 1 - D raw
    coeffs = code.coeffs
    resid = patches.matrix - atoms @ coeffs
    srow = patches.matrix.sum(axis=1) - atoms @ dist_raw

    csr = coeffs.tocsr()
    needs_replacement = np.zeros(m, dtype=bool)
    for k in range(m):
        lo, hi = csr.indptr[k], csr.indptr[k + 1]
        cols = csr.indices[lo:hi]
        alpha = csr.data[lo:hi]
        if cols.size == 0:
            needs_replacement[k] = True
        e_k = resid[:, cols] + np.outer(atoms[:, k], alpha)
        f_k = srow + atoms[:, k] * dist_raw[k]
        try:
            new_atom = update_atom(
                k, e_k, alpha, f_k, dist_raw[k], plan_rows[k], other, lam, gamma
            )
        except AtomUnusedError:
            needs_replacement[k] = True
            continue
        resid[:, cols] = e_k - np.outer(new_atom, alpha)
        srow = f_k - new_atom * dist_raw[k]
        atoms[:, k] = new_atom

    rng = np.random.default_rng(seed)
    norms = np.linalg.norm(atoms, axis=0)
    for k in range(m):
        replace = needs_replacement[k] or norms[k] == 0.0
        if not replace and k > 0:
            lower = np.flatnonzero(norms[:k] > 0.0)
            if lower.size:
                corr = np.abs(atoms[:, lower].T @ atoms[:, k]) / (norms[lower] * norms[k])
                replace = bool(np.max(corr) > CORRELATION_LIMIT)
        if replace:
            atoms[:, k] = patches.matrix[:, rng.integers(0, patches.count)]
            norms[k] = np.linalg.norm(atoms[:, k])
    return Dictionary(atoms)


def atlas(dictionary: Dictionary, patch_size: int, channels: int) -> Image:
    """Tile the atoms into a ceil(sqrt(m)) grid mosaic for visual inspection.

    Each atom is de-vectorized to a patch and rescaled on its own to [0, 1]
    (constant atoms render mid-gray); unused grid cells stay black.
    """
    d = patch_size * patch_size * channels
    if dictionary.dim != d:
        raise ValueError(
            f"atom dimension {dictionary.dim} does not match "
            f"{patch_size}x{patch_size}x{channels}"
        )
    m = dictionary.n_atoms
    g = int(np.ceil(np.sqrt(m)))
    mosaic = np.zeros((g * patch_size, g * patch_size, channels))
    for k in range(m):
        block = dictionary.atoms[:, k].reshape(channels, patch_size, patch_size)
        block = block.transpose(1, 2, 0)
        lo, hi = block.min(), block.max()
        block = (block - lo) / (hi - lo) if hi > lo else np.full_like(block, 0.5)
        r, c = divmod(k, g)
        mosaic[
            r * patch_size : (r + 1) * patch_size, c * patch_size : (c + 1) * patch_size
        ] = block
    return Image(mosaic)
