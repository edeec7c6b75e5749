"""Throughput-maximizing velocity-class probabilities.

Maximizes the pairwise exchange objective sum_{i != j} p_i p_j
(1/|v_i| + 1/|v_j|) over the probability simplex. The reduced objective
(last probability eliminated) is strictly concave, so the optimum is
unique; it is found by an active-set sweep that solves the stationarity
system on a trailing-zero pattern and shrinks the active set from the
fastest class downward until the solution is feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, NumericalError

NEG_CLAMP_TOL = 1e-12
KKT_TOL = 1e-9
PIVOT_RTOL = 1e-14


def _check_speeds(speeds) -> np.ndarray:
    arr = np.asarray(speeds, dtype=float)
    if arr.ndim != 1:
        raise InvalidParameterError("speeds must be a flat sequence")
    if np.any(arr == 0):
        raise InvalidParameterError("speeds must be nonzero")
    return arr


def alpha_matrix(speeds) -> np.ndarray:
    """Symmetric matrix of pairwise inverse-speed sums, zero diagonal."""
    inv = 1.0 / np.abs(_check_speeds(speeds))
    a = inv[:, None] + inv[None, :]
    np.fill_diagonal(a, 0.0)
    return a


def objective(p, speeds) -> float:
    """Exchange objective over ordered pairs: p @ A @ p."""
    pvec = np.asarray(p, dtype=float)
    a = alpha_matrix(speeds)
    if pvec.shape != (a.shape[0],):
        raise InvalidParameterError("probability/speed length mismatch")
    return float(pvec @ a @ pvec)


def reduced_hessian(speeds) -> np.ndarray:
    """Hessian of the reduced pair objective, eliminating the last probability.

    Uses the convention that counts each unordered pair once (half the
    quadratic form p @ A @ p; the scale does not move the maximizer).
    Closed form: -2*diag(1/|v_1|..1/|v_{M-1}|) - (2/|v_M|) * ones. Negative
    definite for any nonzero speeds, which is the concavity certificate.
    """
    arr = _check_speeds(speeds)
    m = arr.size
    if m < 2:
        raise InvalidParameterError("need at least two classes")
    inv = 1.0 / np.abs(arr)
    return -2.0 * np.diag(inv[:-1]) - 2.0 * inv[-1] * np.ones((m - 1, m - 1))


def _solve_with_pivoting(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting on a small dense system."""
    n = a.shape[0]
    aug = np.concatenate([a.astype(float), b.reshape(-1, 1).astype(float)], axis=1)
    threshold = PIVOT_RTOL * np.abs(a).max()
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < threshold:
            raise NumericalError(f"near-singular system: pivot {aug[piv, col]!r}")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col and aug[row, col] != 0.0:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n]


@dataclass(frozen=True)
class PmfSolution:
    """Optimal probabilities with their stationarity certificate.

    ``p`` is in the caller's speed order; ``p_sorted`` in ascending |v|
    order with ``sort_index`` the corresponding argsort. ``kkt_nu`` is the
    common marginal value of the active classes and ``kkt_residual`` the
    largest stationarity/feasibility violation.
    """

    p: tuple[float, ...]
    p_sorted: tuple[float, ...]
    sort_index: tuple[int, ...]
    objective: float
    active_set_size: int
    kkt_nu: float
    kkt_residual: float


def optimize_pmf(speeds) -> PmfSolution:
    """Find the unique simplex maximizer of the exchange objective.

    Solves A_n x = 1 on the first n classes (speeds sorted ascending by
    |v|), normalizes to the simplex, and shrinks n while any component is
    negative; the two-class core always terminates at (0.5, 0.5). The
    returned solution carries a verified stationarity certificate.
    """
    arr = _check_speeds(speeds)
    m = arr.size
    if m < 2:
        raise InvalidParameterError("need at least two classes")
    order = np.argsort(np.abs(arr), kind="stable")
    inv = 1.0 / np.abs(arr)[order]
    full = None
    n = m
    while n >= 2:
        a_n = inv[:n, None] + inv[None, :n]
        np.fill_diagonal(a_n, 0.0)
        x = _solve_with_pivoting(a_n, np.ones(n))
        p_n = x / np.abs(x).sum()
        if p_n.min() >= -NEG_CLAMP_TOL:
            p_n = np.clip(p_n, 0.0, None)
            p_n /= p_n.sum()
            full = np.zeros(m)
            full[:n] = p_n
            break
        n -= 1
    if full is None:
        raise NumericalError("active set shrank below two classes")

    a_full = inv[:, None] + inv[None, :]
    np.fill_diagonal(a_full, 0.0)
    marginals = a_full @ full
    active = full > 0.0
    nu = float(marginals[active].mean())
    residual = float(np.abs(marginals[active] - nu).max())
    if np.any(~active):
        residual = max(residual, float((marginals[~active] - nu).max()), 0.0)
    if residual > KKT_TOL:
        raise NumericalError(f"stationarity residual {residual!r} exceeds {KKT_TOL}")

    p_caller = np.zeros(m)
    p_caller[order] = full
    return PmfSolution(
        p=tuple(float(v) for v in p_caller),
        p_sorted=tuple(float(v) for v in full),
        sort_index=tuple(int(i) for i in order),
        objective=float(full @ a_full @ full),
        active_set_size=int(active.sum()),
        kkt_nu=nu,
        kkt_residual=residual,
    )


def probabilities_decrease_with_speed(solution: PmfSolution, speeds) -> bool:
    """True iff slower classes carry at least as much probability.

    Checks the solution in ascending-|v| order with a 1e-12 slack; ties in
    |v| make the comparison non-strict.
    """
    arr = _check_speeds(speeds)
    order = np.argsort(np.abs(arr), kind="stable")
    p = np.asarray(solution.p)[order]
    return bool(np.all(np.diff(p) <= NEG_CLAMP_TOL))
