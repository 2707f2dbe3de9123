"""Coefficient data and structural checks for cross-diffusion systems.

The systems treated here couple n population densities through diffusion
matrices of the form

    A_ij(u) = d_ij * (a_i0 + sum_k a_ik u_k) + a_ij u_i,      d_ij = Kronecker,

so everything structural is encoded in the nonnegative interaction matrix
``a`` and the constant-diffusion vector ``a0``.  Whether the system admits a
logarithmic entropy, and how strongly, is decided by scalar conditions on
``a`` alone.  This module holds the coefficient container plus those
certificates:

* detailed balance: existence of pi > 0 with pi_i a_ij = pi_j a_ji,
* pairwise dominance: 4 a_ii > sum_j (sqrt(a_ij) - sqrt(a_ji))^2,
* weighted dominance: kappa(pi) = min_i (8 pi_i a_ii - sum_{j!=i} pi_j a_ji)
  positive for some pi > 0, searched by a small linear program.

The weighted condition is the one the solver needs; the other two are
cheaper sufficient certificates worth reporting alongside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

# Fixed floors, shared with tests.  The LP cannot express strict positivity,
# so pi is bounded below; mu is floored so the eps-regularization matrix
# never degenerates to zero even for diagonal `a`.
PI_MIN = 1e-9
MU_FLOOR = 1e-8
DB_TOL_DEFAULT = 1e-10


@dataclass(frozen=True)
class CoefficientSet:
    """Interaction matrix ``a`` (n x n) and constant diffusion ``a0`` (length n)."""

    a: np.ndarray
    a0: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        a0 = np.array(self.a0, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"a must be a square matrix, got shape {a.shape}")
        if a0.shape != (a.shape[0],):
            raise ValueError(f"a0 must have shape ({a.shape[0]},), got {a0.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(a0))):
            raise ValueError("coefficients must be finite")
        if np.any(a < 0.0) or np.any(a0 < 0.0):
            raise ValueError("coefficients must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a0", a0)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class EntropyWeights:
    """Entropy weights pi, regularization slopes mu, and the margin kappa.

    ``kappa`` stores min_i (8 pi_i a_ii - sum_{j!=i} pi_j a_ji) for the
    coefficient set the weights were built for; it is recomputable via
    :func:`kappa` and positive exactly when the weighted dominance condition
    holds with these weights.
    """

    pi: np.ndarray
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if pi.ndim != 1 or mu.shape != pi.shape:
            raise ValueError("pi and mu must be vectors of equal length")
        if not np.all(np.isfinite(pi)) or np.any(pi <= 0.0):
            raise ValueError("pi must be strictly positive")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0.0):
            raise ValueError("mu must be strictly positive")
        if not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)


def kappa(coeffs: CoefficientSet, pi) -> float:
    """Margin min_i (8 pi_i a_ii - sum_{j!=i} pi_j a_ji) of the weighted condition."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (coeffs.n,):
        raise ValueError(f"pi must have shape ({coeffs.n},), got {pi.shape}")
    if np.any(pi <= 0.0):
        raise ValueError("pi must be strictly positive")
    a = coeffs.a
    diag = np.diag(a)
    cross = a.T @ pi - diag * pi  # sum_j pi_j a_ji without the j = i term
    return float(np.min(8.0 * pi * diag - cross))


def mu_defaults(coeffs: CoefficientSet) -> np.ndarray:
    """Smallest admissible slopes mu_i = sum_{j!=i}(a_ij + a_ji)/2, floored at MU_FLOOR."""
    a = coeffs.a
    half = 0.5 * (a.sum(axis=1) + a.sum(axis=0) - 2.0 * np.diag(a))
    return np.maximum(half, MU_FLOOR)


def check_detailed_balance(coeffs: CoefficientSet, tol: float = DB_TOL_DEFAULT):
    """Search for pi > 0 with pi_i a_ij = pi_j a_ji for all pairs.

    The condition fixes the ratio pi_j/pi_i = a_ij/a_ji wherever both
    entries are positive, so candidate weights follow by propagating ratios
    along the connectivity graph of the off-diagonal entries.  A pair with
    exactly one vanishing entry is immediately fatal (it would force some
    pi_i = 0), and inconsistent cycles are caught by the final residual
    check over all pairs.  Returns pi normalized to sum 1, or None.
    Species untouched by any constraint keep the default weight 1/n before
    normalization.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    a = coeffs.a
    n = coeffs.n
    for i in range(n):
        for j in range(i + 1, n):
            if (a[i, j] == 0.0) != (a[j, i] == 0.0):
                return None

    # Propagate log-ratios component by component; roots get weight 1/n.
    logpi = np.full(n, np.nan)
    for root in range(n):
        if not math.isnan(logpi[root]):
            continue
        logpi[root] = math.log(1.0 / n)
        stack = [root]
        while stack:
            i = stack.pop()
            for j in range(n):
                if j == i or a[i, j] == 0.0:
                    continue
                cand = logpi[i] + math.log(a[i, j]) - math.log(a[j, i])
                if math.isnan(logpi[j]):
                    logpi[j] = cand
                    stack.append(j)

    pi = np.exp(logpi - logpi.max())  # guard against overflow before normalizing
    pi /= pi.sum()
    scaled = pi[:, None] * a
    if np.max(np.abs(scaled - scaled.T)) > tol:
        return None
    return pi


def check_wcd(coeffs: CoefficientSet) -> bool:
    """Pairwise dominance: 4 a_ii > sum_j (sqrt(a_ij) - sqrt(a_ji))^2, every i."""
    r = np.sqrt(coeffs.a)
    gap = ((r - r.T) ** 2).sum(axis=1)
    return bool(np.all(4.0 * np.diag(coeffs.a) > gap))


def find_pi_max_kappa(coeffs: CoefficientSet):
    """Maximize the dominance margin over normalized weights.

    Linear program in (pi, t): maximize t subject to
    8 pi_i a_ii - sum_{j!=i} pi_j a_ji >= t for every i, sum pi = 1 and
    pi >= PI_MIN.  Returns EntropyWeights carrying the optimal pi, the
    recomputed margin, and default mu when the margin is positive; None
    when even the best weights cannot make it positive.
    """
    n = coeffs.n
    a = coeffs.a
    # Row i: sum_{j != i} pi_j a_ji - 8 pi_i a_ii + t <= 0.
    body = a.T.copy()
    np.fill_diagonal(body, -8.0 * np.diag(a))
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(
        c,
        A_ub=np.hstack([body, np.ones((n, 1))]),
        b_ub=np.zeros(n),
        A_eq=np.hstack([np.ones((1, n)), np.zeros((1, 1))]),
        b_eq=np.array([1.0]),
        bounds=[(PI_MIN, None)] * n + [(None, None)],
        method="highs",
    )
    if not res.success:
        # The feasible region always contains the uniform weights, so any
        # failure is a solver breakdown rather than genuine infeasibility.
        raise RuntimeError(f"weight search LP failed: {res.message}")
    pi = res.x[:n]
    margin = kappa(coeffs, pi)  # recomputed so the stored value is exact
    if margin <= 0.0:
        return None
    return EntropyWeights(pi=pi, mu=mu_defaults(coeffs), kappa=margin)


def cyclic3_coeffs(a11: float, a22: float, a33: float, a0=(1.0, 1.0, 1.0)) -> CoefficientSet:
    """Three-species cyclic chain: a13 = a21 = a32 = 1, other off-diagonals 0."""
    a = np.array(
        [
            [a11, 0.0, 1.0],
            [1.0, a22, 0.0],
            [0.0, 1.0, a33],
        ]
    )
    return CoefficientSet(a=a, a0=np.asarray(a0, dtype=float))


def cyclic3_pi(a11: float, a22: float, a33: float):
    """Closed-form weights for the cyclic three-species chain.

    For the pattern a13 = a21 = a32 = 1 a positive margin is achievable
    exactly when a11 a22 a33 > 1/512, and in that regime the explicit choice

        pi1 = 1,
        pi2 = (8 a11 + 1/(64 a22 a33)) / 2,
        pi3 = (8 pi2 a22 + 1/(8 a33)) / 2

    works.  Returns the unnormalized weight vector, or None at or below the
    threshold (presence matches the strict inequality).
    """
    if a11 <= 0.0 or a22 <= 0.0 or a33 <= 0.0:
        raise ValueError("diagonal entries must be positive")
    if a11 * a22 * a33 <= 0.125**3:
        return None
    pi2 = 0.5 * (8.0 * a11 + 1.0 / (64.0 * a22 * a33))
    pi3 = 0.5 * (8.0 * pi2 * a22 + 1.0 / (8.0 * a33))
    return np.array([1.0, pi2, pi3])


def eta0(coeffs: CoefficientSet) -> float:
    """Largest admissible density shift, min_i a_i0 / (sum_j a_ij + a_ii).

    Requires every a_i0 > 0.  A species whose row of ``a`` vanishes puts no
    restriction on the shift; if that happens for all species the result is
    +inf (the shift is unbounded).
    """
    if np.any(coeffs.a0 == 0.0):
        raise ValueError("eta0 undefined: requires a_i0 > 0")
    denom = coeffs.a.sum(axis=1) + np.diag(coeffs.a)
    vals = np.full(coeffs.n, np.inf)
    pos = denom > 0.0
    vals[pos] = coeffs.a0[pos] / denom[pos]
    return float(vals.min())
