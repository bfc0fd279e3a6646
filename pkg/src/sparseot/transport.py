"""Discrete optimal transport between the two dictionaries.

The ground cost is the squared Euclidean distance between atoms. Small
instances are solved exactly as a transportation linear program (simplex, so
the returned plan is a vertex of the polytope); larger ones use entropic
regularization and Sinkhorn scaling. The entropic parameter is interpreted
against the cost matrix normalized by its maximum entry, which keeps one
default usable across images of very different scales; reported transport
costs always use the unnormalized cost.

The Sinkhorn loop runs as plain diagonal scaling while the scaling vectors
stay inside [1e-100, 1e100] and transparently switches to an equivalent
log-domain evaluation when they leave that range (which at small eta they do
immediately, since the kernel itself underflows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from .dictionary import Dictionary
from .exceptions import NumericFailure, TransportSizeError

#: largest m * n solved by the exact linear program before demanding sinkhorn
EXACT_CAP = 512 * 512

_SCALE_LO, _SCALE_HI = 1e-100, 1e100


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling with its target marginals.

    For Sinkhorn plans, ``iterations`` and ``marginal_error`` report how the
    solve went; exact plans leave them as None.
    """

    entries: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    iterations: int | None = None
    marginal_error: float | None = None

    def __post_init__(self):
        entries = np.ascontiguousarray(np.asarray(self.entries, dtype=np.float64))
        row = np.asarray(self.row_marginal, dtype=np.float64)
        col = np.asarray(self.col_marginal, dtype=np.float64)
        if entries.ndim != 2 or entries.shape != (row.size, col.size):
            raise ValueError("plan shape does not match marginal lengths")
        if not np.all(np.isfinite(entries)):
            raise ValueError("plan contains non-finite entries")
        if entries.min() < 0.0:
            raise ValueError("plan contains negative mass")
        if abs(entries.sum() - 1.0) > 1e-9:
            raise ValueError("plan mass must total 1 within 1e-9")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "row_marginal", row)
        object.__setattr__(self, "col_marginal", col)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def cost_matrix(dx: Dictionary, dy: Dictionary) -> np.ndarray:
    """Pairwise squared Euclidean distances between the atoms of dx and dy."""
    if dx.dim != dy.dim:
        raise ValueError(f"atom dimensions differ: {dx.dim} vs {dy.dim}")
    return cdist(dx.atoms.T, dy.atoms.T, metric="sqeuclidean")


def _check_marginals(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    for name, v in (("a", a), ("b", b)):
        if not np.all(np.isfinite(v)):
            raise ValueError(f"marginal {name} contains non-finite entries")
        if v.min() <= 0.0:
            raise ValueError(f"marginal {name} must be strictly positive")
        if abs(v.sum() - 1.0) > 1e-8:
            raise ValueError(f"marginal {name} must sum to 1 (got {v.sum():.12g})")
    return a, b


def _check_cost(cost: np.ndarray) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-d matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost contains non-finite entries")
    if cost.min() < 0.0:
        raise ValueError("cost entries must be nonnegative")
    return cost


def exact_ot(
    cost: np.ndarray, a: np.ndarray, b: np.ndarray, cap: int = EXACT_CAP
) -> TransportPlan:
    """Optimal vertex solution of the transportation linear program.

    Solved with the HiGHS dual simplex; marginals hold to 1e-9. Instances
    with m * n above `cap` raise TransportSizeError.
    """
    cost = _check_cost(cost)
    a, b = _check_marginals(a, b)
    m, n = cost.shape
    if (m, n) != (a.size, b.size):
        raise ValueError("cost shape does not match marginal lengths")
    if m * n > cap:
        raise TransportSizeError(
            f"exact solver capped at {cap} variables, got {m}x{n}; use sinkhorn"
        )

    # equality constraints: row sums then column sums (one is redundant)
    row_idx = np.repeat(np.arange(m), n)
    col_idx = np.tile(np.arange(n), m)
    eye_rows = sparse.csr_array(
        (np.ones(m * n), (row_idx, np.arange(m * n))), shape=(m, m * n)
    )
    eye_cols = sparse.csr_array(
        (np.ones(m * n), (col_idx, np.arange(m * n))), shape=(n, m * n)
    )
    a_eq = sparse.vstack([eye_rows, eye_cols])
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise NumericFailure(f"transportation LP failed: {res.message}")
    plan = res.x.reshape(m, n)
    plan[plan < 0.0] = 0.0  # simplex may emit -0.0 / tiny negatives at bounds
    return TransportPlan(plan, a, b)


def _plain_loop(kernel, a, b, max_iters, tol):
    """Alternating diagonal scaling; returns (u, v, iters, err, ok).

    ok=False means a scaling factor left the safe range and the caller must
    continue in the log domain.
    """
    m, n = kernel.shape
    u = np.ones(m)
    v = np.ones(n)
    err = np.inf
    for it in range(1, max_iters + 1):
        # overflow/underflow here is expected: the range checks below detect
        # it and hand the last safe scaling to the log-domain continuation
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            kv = kernel @ v
            if kv.min() <= 0.0:
                return u, v, it - 1, err, False
            u_new = a / kv
            if u_new.max() > _SCALE_HI or u_new.min() < _SCALE_LO:
                return u, v, it - 1, err, False
            ktu = kernel.T @ u_new
            if ktu.min() <= 0.0:
                return u, v, it - 1, err, False
            v_new = b / ktu
            if v_new.max() > _SCALE_HI or v_new.min() < _SCALE_LO:
                return u, v, it - 1, err, False
        u, v = u_new, v_new
        plan = u[:, None] * kernel * v[None, :]
        err = max(
            np.abs(plan.sum(axis=1) - a).sum(), np.abs(plan.sum(axis=0) - b).sum()
        )
        if err <= tol:
            return u, v, it, err, True
    return u, v, max_iters, err, True


def _lse_rows(mat: np.ndarray) -> np.ndarray:
    mx = mat.max(axis=1)
    return mx + np.log(np.exp(mat - mx[:, None]).sum(axis=1))


def _log_loop(log_kernel, a, b, phi, psi, start_iter, max_iters, tol):
    """Log-domain scaling on duals phi = log u, psi = log v."""
    loga, logb = np.log(a), np.log(b)
    err = np.inf
    it = start_iter
    while it < max_iters:
        it += 1
        phi = loga - _lse_rows(log_kernel + psi[None, :])
        psi = logb - _lse_rows((log_kernel + phi[:, None]).T)
        plan = np.exp(log_kernel + phi[:, None] + psi[None, :])
        err = max(
            np.abs(plan.sum(axis=1) - a).sum(), np.abs(plan.sum(axis=0) - b).sum()
        )
        if err <= tol:
            break
    return phi, psi, it, err


def sinkhorn(
    cost: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    eta: float,
    max_iters: int = 200,
    tol: float = 1e-9,
) -> TransportPlan:
    """Entropic-regularized transport by alternating diagonal scaling.

    Iterates until the L1 marginal error max(|T1 - a|_1, |T'1 - b|_1) drops
    to `tol` or `max_iters` is hit; the returned plan is strictly positive
    and records iterations used and the final marginal error.
    """
    cost = _check_cost(cost)
    a, b = _check_marginals(a, b)
    if cost.shape != (a.size, b.size):
        raise ValueError("cost shape does not match marginal lengths")
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    cmax = cost.max()
    scaled = cost / cmax if cmax > 0.0 else cost
    log_kernel = -scaled / eta

    kernel = np.exp(log_kernel)
    u, v, done, err, ok = _plain_loop(kernel, a, b, max_iters, tol)
    if ok:
        plan = u[:, None] * kernel * v[None, :]
        iters = done
    else:
        # continue from the last safe scaling in the log domain
        with np.errstate(divide="ignore"):
            phi, psi = np.log(u), np.log(v)
        phi, psi, iters, err = _log_loop(
            log_kernel, a, b, phi, psi, done, max_iters, tol
        )
        plan = np.exp(log_kernel + phi[:, None] + psi[None, :])
    if not np.all(np.isfinite(plan)):
        raise NumericFailure("sinkhorn produced non-finite plan entries")
    return TransportPlan(plan, a, b, iterations=iters, marginal_error=float(err))


def transport_cost(cost: np.ndarray, plan: TransportPlan) -> float:
    """Frobenius inner product <C, T>."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.shape != plan.shape:
        raise ValueError(f"cost shape {cost.shape} != plan shape {plan.shape}")
    return float(np.sum(cost * plan.entries))


def export_plan_csv(plan: TransportPlan, path) -> None:
    """Write the plan and its marginals as one CSV table.

    The header row carries the column marginal after an empty corner cell;
    each following row starts with its row-marginal entry, then the plan row.
    """
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + [repr(float(x)) for x in plan.col_marginal])
        for i in range(plan.shape[0]):
            writer.writerow(
                [repr(float(plan.row_marginal[i]))]
                + [repr(float(x)) for x in plan.entries[i]]
            )
