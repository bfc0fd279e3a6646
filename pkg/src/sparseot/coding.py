"""Sparse coding of patches against a fixed dictionary.

Orthogonal matching pursuit: greedy selection of the atom whose normalized
correlation with the current residual is largest in magnitude, followed by a
least-squares re-fit over the selected support. Atoms are rescaled to unit
norm for the selection step only; reported coefficients are against the
unnormalized atoms, since atoms double as ground-cost points for transport
and must not be altered here.

Coding for all patches shares one Gram matrix and runs the per-signal solves
batched, which is what makes 10k-100k patch sets practical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .dictionary import Dictionary
from .exceptions import DegenerateDistributionError, DegenerateSupportWarning
from .patches import PatchSet


@dataclass(frozen=True)
class SparseCode:
    """Column-sparse coefficient matrix (atoms x patches)."""

    coeffs: sparse.csc_array

    def __post_init__(self):
        coeffs = sparse.csc_array(self.coeffs)
        coeffs.sort_indices()
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_atoms(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_signals(self) -> int:
        return self.coeffs.shape[1]

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Support indices (strictly increasing) and values of column j."""
        lo, hi = self.coeffs.indptr[j], self.coeffs.indptr[j + 1]
        return self.coeffs.indices[lo:hi].copy(), self.coeffs.data[lo:hi].copy()

    def columns_using(self, k: int) -> np.ndarray:
        """Indices of the signals whose support contains atom k, ascending."""
        csr = self.coeffs.tocsr()
        lo, hi = csr.indptr[k], csr.indptr[k + 1]
        return np.sort(csr.indices[lo:hi])

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.coeffs.sum(axis=1)).ravel()


@dataclass(frozen=True)
class AtomDistribution:
    """Coefficient row sums and the probability vector derived from them."""

    raw: np.ndarray
    prob: np.ndarray


def _omp_batch(atoms: np.ndarray, signals: np.ndarray, max_atoms: int, tol: float):
    """OMP for every column of `signals`; returns per-column (support, values).

    Selection uses |<d_j / ||d_j||, r>|, ties broken toward the lowest atom
    index; the re-fit solves the normal equations over the support using the
    shared Gram matrix. A signal stops when its squared residual norm drops
    to `tol` or its support is full. Rank-deficient supports drop the newly
    added atom and stop that signal.
    """
    d, m = atoms.shape
    _, n_sig = signals.shape
    max_atoms = min(max_atoms, m)

    norms = np.linalg.norm(atoms, axis=0)
    gram = atoms.T @ atoms
    dtx = atoms.T @ signals                       # (m, n_sig)
    sq = np.einsum("ij,ij->j", signals, signals)  # ||x||^2 per signal

    supports = np.full((n_sig, max_atoms), -1, dtype=np.int64)
    coefs = np.zeros((n_sig, max_atoms))
    sizes = np.zeros(n_sig, dtype=np.int64)

    active = sq > tol
    resid2 = sq.copy()
    for step in range(max_atoms):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        if step == 0:
            corr = dtx[:, idx]
        else:
            sel = supports[idx, :step]                         # (n_act, step)
            cs = coefs[idx, :step]
            corr = dtx[:, idx] - np.einsum("mak,ak->ma", gram[:, sel], cs)
        picks = np.argmax(np.abs(corr) / norms[:, None], axis=0)

        # drop signals whose residual is numerically orthogonal to every atom
        dead = np.abs(corr[picks, np.arange(idx.size)]) <= 0.0
        if np.any(dead):
            active[idx[dead]] = False
            idx = idx[~dead]
            picks = picks[~dead]
            if idx.size == 0:
                continue

        supports[idx, step] = picks
        sizes[idx] = step + 1
        sel = supports[idx, : step + 1]                        # (n_act, step+1)
        gsub = gram[sel[:, :, None], sel[:, None, :]]          # (n_act, k, k)
        rhs = dtx[sel, idx[:, None]]                           # (n_act, k)
        try:
            sol = np.linalg.solve(gsub, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            sol = np.empty_like(rhs)
            for i in range(idx.size):
                try:
                    sol[i] = np.linalg.solve(gsub[i], rhs[i])
                except np.linalg.LinAlgError:
                    # rank-deficient support: discard the new atom, freeze the signal
                    warnings.warn(
                        f"signal {idx[i]}: rank-deficient support at size {step + 1}",
                        DegenerateSupportWarning,
                        stacklevel=3,
                    )
                    supports[idx[i], step] = -1
                    sizes[idx[i]] = step
                    sol[i, :step] = coefs[idx[i], :step]
                    sol[i, step] = 0.0
                    active[idx[i]] = False
        coefs[idx, : step + 1] = sol
        # residual^2 = ||x||^2 - c . (D^T x)|_S, exact when the normal
        # equations hold; drives stopping only.
        resid2[idx] = np.maximum(sq[idx] - np.einsum("ak,ak->a", sol, rhs), 0.0)
        active[idx] &= resid2[idx] > tol

    return supports, coefs, sizes


def omp(
    dictionary: Dictionary, signal: np.ndarray, max_atoms: int, tol: float
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse-code one signal; returns (support, values) sorted by atom index."""
    if max_atoms < 1:
        raise ValueError("max_atoms must be >= 1")
    if tol < 0:
        raise ValueError("tol must be >= 0")
    norms = np.linalg.norm(dictionary.atoms, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("dictionary contains all-zero atoms")
    signal = np.asarray(signal, dtype=np.float64).ravel()
    if signal.shape[0] != dictionary.dim:
        raise ValueError(f"signal length {signal.shape[0]} != atom dimension {dictionary.dim}")
    supports, coefs, sizes = _omp_batch(dictionary.atoms, signal[:, None], max_atoms, tol)
    k = int(sizes[0])
    order = np.argsort(supports[0, :k], kind="stable")
    return supports[0, :k][order], coefs[0, :k][order]


def encode_all(
    dictionary: Dictionary, patches: PatchSet, max_atoms: int, tol: float
) -> SparseCode:
    """OMP applied to every patch column; column order preserved, deterministic."""
    if max_atoms < 1:
        raise ValueError("max_atoms must be >= 1")
    if tol < 0:
        raise ValueError("tol must be >= 0")
    norms = np.linalg.norm(dictionary.atoms, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("dictionary contains all-zero atoms")
    if patches.dim != dictionary.dim:
        raise ValueError(f"patch dimension {patches.dim} != atom dimension {dictionary.dim}")

    supports, coefs, sizes = _omp_batch(dictionary.atoms, patches.matrix, max_atoms, tol)

    indptr = np.zeros(patches.count + 1, dtype=np.int64)
    np.cumsum(sizes, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1])
    for j in range(patches.count):
        k = sizes[j]
        order = np.argsort(supports[j, :k], kind="stable")
        indices[indptr[j] : indptr[j + 1]] = supports[j, :k][order]
        data[indptr[j] : indptr[j + 1]] = coefs[j, :k][order]
    mat = sparse.csc_array(
        (data, indices, indptr), shape=(dictionary.n_atoms, patches.count)
    )
    return SparseCode(mat)


def sign_fix(dictionary: Dictionary, code: SparseCode) -> tuple[Dictionary, SparseCode]:
    """Negate every atom whose coefficient row sum is negative, and its row.

    The product D A is unchanged; afterwards every row sum is >= 0 (rows
    summing exactly to zero are left alone).
    """
    sums = code.row_sums()
    neg = sums < 0.0
    if not np.any(neg):
        return dictionary, code
    atoms = dictionary.atoms.copy()
    atoms[:, neg] = -atoms[:, neg]
    coeffs = code.coeffs.copy()
    flip = neg[coeffs.indices]
    coeffs.data[flip] = -coeffs.data[flip]
    return Dictionary(atoms), SparseCode(coeffs)


def distribution(code: SparseCode, floor: float = 1e-12) -> AtomDistribution:
    """Row sums floored and normalized onto the probability simplex."""
    raw = code.row_sums()
    if np.any(raw < 0.0):
        raise ValueError("negative row sums; run sign_fix before distribution")
    if floor < 0.0:
        raise ValueError("floor must be >= 0")
    shifted = raw + floor
    total = shifted.sum()
    if total <= 0.0:
        raise DegenerateDistributionError(
            "all coefficient row sums are zero and floor is 0; no distribution exists"
        )
    return AtomDistribution(raw=raw, prob=shifted / total)
