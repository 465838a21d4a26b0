"""Diffusion of per-head estimates over the cluster-head graph.

Every epoch each head replaces its estimate with a convex combination of
its neighborhood's estimates. Three coefficient rules are provided:

* ``con``: static weights proportional to neighbor degrees.
* ``wei``: weights shrink exponentially with squared distance from the
  network-wide per-dimension median, recomputed every epoch.
* ``opt``: weights minimize the fused estimator's variance through a
  simplex-constrained quadratic program over the neighborhood, using the
  heads' linear estimation operators.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import NetworkTopology

__all__ = [
    "DiffusionState",
    "SCHEMES",
    "build_q_matrix",
    "connectivity_weights",
    "diffuse",
    "median_weights",
    "optimal_weights",
]

logger = logging.getLogger(__name__)

SCHEMES = ("con", "wei", "opt")

# reduced-gradient slack accepted when checking the QP optimality conditions
_KKT_TOL = 1e-8


@dataclass(frozen=True)
class DiffusionState:
    """Snapshot of the diffusion iteration.

    estimates: (N, 2) per-head positions.
    operators: (N, 2, K) per-head linear estimation operators, or None for
        schemes that do not track them.
    epoch: epochs completed (0 for a fresh initial state).
    converged: True when the largest per-head step fell to the tolerance.
    """

    estimates: np.ndarray
    operators: Optional[np.ndarray]
    epoch: int = 0
    converged: bool = False


def _active_neighborhood(topology: NetworkTopology, k: int, active) -> np.ndarray:
    nbhd = topology.neighborhood(k)
    if active is None:
        return nbhd
    return nbhd[active[nbhd]]


def connectivity_weights(topology: NetworkTopology, k: int, active=None) -> np.ndarray:
    """Degree-proportional combination weights over head k's neighborhood."""
    nbhd = _active_neighborhood(topology, k, active)
    if nbhd.size == 0:
        raise ValueError(f"head {k} has an empty active neighborhood")
    weights = np.zeros(topology.n_heads)
    degrees = topology.degrees
    weights[nbhd] = degrees[nbhd]
    return weights / weights.sum()


def median_weights(
    estimates: np.ndarray,
    k: int,
    topology: NetworkTopology,
    decay_scale: float,
    active=None,
) -> np.ndarray:
    """Distance-from-median combination weights over head k's neighborhood.

    The reference point is the per-dimension median over every active
    head's estimate; each neighbor's weight is exp(-d^2 / decay_scale) of
    its squared distance from that median, normalized over the
    neighborhood. A network-wide reference keeps far-off estimates
    down-weighted everywhere, so stray heads are pulled toward the
    consensus instead of anchoring their own cluster. When every weight
    underflows to zero the combination falls back to uniform weights
    (logged).
    """
    if decay_scale <= 0:
        raise ValueError("decay_scale must be positive")
    nbhd = _active_neighborhood(topology, k, active)
    if nbhd.size == 0:
        raise ValueError(f"head {k} has an empty active neighborhood")
    points = estimates[nbhd]
    pool = estimates if active is None else estimates[np.asarray(active)]
    median = np.median(pool, axis=0)
    sq_dist = np.sum((points - median) ** 2, axis=1)
    raw = np.exp(-sq_dist / decay_scale)
    total = raw.sum()
    if total <= 0.0 or not np.isfinite(total):
        logger.warning("median weights underflowed for head %d; using uniform", k)
        raw = np.ones(nbhd.size)
        total = float(nbhd.size)
    weights = np.zeros(topology.n_heads)
    weights[nbhd] = raw / total
    return weights


def build_q_matrix(operators: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Gram matrix of the estimation operators under the noise covariance.

    Entry (m, n) is trace(W @ operators[m].T @ operators[n]) with diagonal
    W. Symmetric positive semidefinite up to rounding.
    """
    ops = np.asarray(operators, dtype=float)
    var = np.asarray(variances, dtype=float)
    if ops.ndim != 3 or ops.shape[1] != 2:
        raise ValueError("operators must have shape (N, 2, K)")
    if var.shape != (ops.shape[2],):
        raise ValueError("variances must match the operator columns")
    q = np.einsum("mdk,ndk->mn", ops * var[None, None, :], ops)
    return 0.5 * (q + q.T)


def _equality_solution(q_sub: np.ndarray) -> Optional[np.ndarray]:
    """Minimize a'Qa subject to sum(a) = 1 on a fixed support.

    Solves the stationarity system; returns None when it is singular.
    """
    m = q_sub.shape[0]
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = 2.0 * q_sub
    kkt[:m, m] = -1.0
    kkt[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:m]


def _simplex_qp(q_sub: np.ndarray) -> np.ndarray:
    """Exact minimizer of a'Qa over the probability simplex.

    Tries the full support first; when that solution leaves the simplex,
    every support subset is solved and the feasible minimizer kept. The
    supports here are neighborhood-sized, so the enumeration stays tiny.
    """
    m = q_sub.shape[0]
    if m == 1:
        return np.ones(1)

    def feasible(vec):
        return vec is not None and np.all(vec >= -1e-12)

    full = _equality_solution(q_sub)
    if feasible(full):
        best = np.clip(full, 0.0, None)
        return best / best.sum()

    best_vec = None
    best_obj = np.inf
    for size in range(1, m + 1):
        for subset in itertools.combinations(range(m), size):
            idx = np.array(subset)
            if size == 1:
                cand = np.ones(1)
            else:
                cand = _equality_solution(q_sub[np.ix_(idx, idx)])
                if not feasible(cand):
                    continue
                cand = np.clip(cand, 0.0, None)
                cand = cand / cand.sum()
            obj = float(cand @ q_sub[np.ix_(idx, idx)] @ cand)
            if obj < best_obj - 1e-15:
                best_obj = obj
                best_vec = np.zeros(m)
                best_vec[idx] = cand
    return best_vec


def optimal_weights(
    q: np.ndarray, k: int, topology: NetworkTopology, active=None
) -> np.ndarray:
    """Variance-minimizing simplex weights over head k's neighborhood.

    Minimizes a' Q a subject to the weights being a probability vector
    supported on the neighborhood. An indefinite restriction (possible
    through rounding) is regularized by adding a small multiple of the
    identity before solving; the event is logged.
    """
    nbhd = _active_neighborhood(topology, k, active)
    if nbhd.size == 0:
        raise ValueError(f"head {k} has an empty active neighborhood")
    q_sub = np.asarray(q, dtype=float)[np.ix_(nbhd, nbhd)]
    solution = _simplex_qp(q_sub)
    obj = float(solution @ q_sub @ solution)
    if obj < -_KKT_TOL:
        epsilon = 1e-9 * np.trace(np.asarray(q, dtype=float)) / q.shape[0]
        logger.warning(
            "indefinite neighborhood matrix for head %d; regularizing with %g",
            k,
            epsilon,
        )
        solution = _simplex_qp(q_sub + epsilon * np.eye(nbhd.size))
    grad = 2.0 * (q_sub @ solution)
    level = float(grad @ solution)
    if np.any(grad < level - _KKT_TOL * max(1.0, abs(level))):
        logger.warning("optimality conditions loose for head %d", k)
    weights = np.zeros(topology.n_heads)
    weights[nbhd] = solution
    return weights


def _coefficient_matrix(
    scheme: str,
    topology: NetworkTopology,
    estimates: np.ndarray,
    operators: Optional[np.ndarray],
    variances: Optional[np.ndarray],
    decay_scale: float,
    active: np.ndarray,
) -> np.ndarray:
    n = topology.n_heads
    coeffs = np.zeros((n, n))
    q = None
    if scheme == "opt":
        q = build_q_matrix(operators, variances)
    for k in range(n):
        if not active[k]:
            coeffs[k, k] = 1.0  # frozen head keeps its estimate
            continue
        if scheme == "con":
            coeffs[:, k] = connectivity_weights(topology, k, active)
        elif scheme == "wei":
            coeffs[:, k] = median_weights(estimates, k, topology, decay_scale, active)
        else:
            coeffs[:, k] = optimal_weights(q, k, topology, active)
    return coeffs


def diffuse(
    initial: DiffusionState,
    scheme: str,
    epsilon: float,
    max_epochs: int,
    topology: NetworkTopology,
    variances: Optional[np.ndarray] = None,
    decay_scale: float = 1.0,
    optimize_once: bool = False,
    active=None,
    on_epoch: Optional[Callable[[int, np.ndarray, np.ndarray, float], None]] = None,
) -> DiffusionState:
    """Iterate neighborhood combinations until the estimates settle.

    Stops when the largest per-head displacement in one epoch is at most
    epsilon, or after max_epochs epochs (logged as non-convergence). For
    the ``opt`` scheme the estimation operators are combined with the same
    coefficients each epoch and the variance matrix rebuilt from them;
    optimize_once solves the quadratic programs only in the first epoch and
    reuses those coefficients afterwards.

    active marks heads that participate; inactive heads keep their state
    and are excluded from every neighborhood. on_epoch, when given, is
    called after each epoch with (epoch, estimates, coefficients,
    max_step).

    Returns the final DiffusionState; convex combination keeps every
    estimate inside the per-dimension envelope of the previous epoch.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if max_epochs < 1:
        raise ValueError("max_epochs must be positive")
    n = topology.n_heads
    act = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    if not act.any():
        raise ValueError("at least one head must be active")
    if scheme == "opt":
        if initial.operators is None:
            raise ValueError("opt scheme needs estimation operators")
        if variances is None:
            raise ValueError("opt scheme needs measurement variances")

    estimates = np.array(initial.estimates, dtype=float)
    operators = None if initial.operators is None else np.array(initial.operators)
    # zero out frozen rows so non-finite placeholders cannot leak through
    # the 0-coefficient matrix products; restored before returning
    frozen_estimates = estimates[~act].copy()
    estimates[~act] = 0.0
    frozen_operators = None
    if operators is not None:
        frozen_operators = operators[~act].copy()
        operators[~act] = 0.0
    static_coeffs = None
    if scheme == "con":
        static_coeffs = _coefficient_matrix(
            "con", topology, estimates, None, None, decay_scale, act
        )

    epoch = 0
    converged = False
    for epoch in range(1, max_epochs + 1):
        if static_coeffs is not None:
            coeffs = static_coeffs
        else:
            coeffs = _coefficient_matrix(
                scheme, topology, estimates, operators, variances, decay_scale, act
            )
            if scheme == "opt" and optimize_once:
                static_coeffs = coeffs
        new_estimates = coeffs.T @ estimates
        if scheme == "opt":
            operators = np.einsum("lk,ldi->kdi", coeffs, operators)
        steps = np.linalg.norm(new_estimates - estimates, axis=1)
        max_step = float(steps[act].max())
        estimates = new_estimates
        if on_epoch is not None:
            on_epoch(epoch, estimates, coeffs, max_step)
        if max_step <= epsilon:
            converged = True
            break
    if not converged:
        logger.warning("diffusion (%s) did not settle in %d epochs", scheme, max_epochs)
    estimates[~act] = frozen_estimates
    if operators is not None:
        operators[~act] = frozen_operators
    return DiffusionState(
        estimates=estimates, operators=operators, epoch=epoch, converged=converged
    )
