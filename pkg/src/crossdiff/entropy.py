"""Entropy densities, variable transforms, and quadratic-form bounds.

The solver works with the logarithmic entropy

    h(u)   = sum_i pi_i (u_i - log u_i),
    h_eps  = h + eps * sum_i u_i (log u_i - 1),

whose regularized gradient w = h_eps'(u) maps (0, inf)^n onto all of R^n
for eps > 0.  Inverting that map is what keeps discrete densities positive:
any real w, for instance a Newton iterate, pulls back to u > 0.

The quadratic-form functions evaluate z^T H A z products densely next to
their analytic lower bounds.  The bounds are exact statements in real
arithmetic; the functions return (value, bound) pairs so callers can check
them under a rounding-sized slack.

Array convention: the species index is axis 0 everywhere, so u may be a
single state of shape (n,) or a batch (n, m) evaluated columnwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from crossdiff.coefficients import CoefficientSet, EntropyWeights, eta0

# Inversion knobs: bisect the log-density bracket down to this width, then
# polish with safeguarded Newton.  Convergence needs both a small residual
# (the w-side contract) and a small Newton step, which measures the relative
# density error directly since the iteration runs in log u.
_BISECT_WIDTH = 1e-3
_RESIDUAL_SCALE = 1e-14
_STEP_TOL = 5e-13
_MAX_ITERS = 80


@dataclass(frozen=True)
class RegularizationParams:
    """Regularization sizes for one scheme instance.

    eps enters the entropy and the diffusion matrix, delta scales the
    H^1 stabilization term, eta shifts densities inside the relative
    entropy, tau is the time step.
    """

    eps: float
    delta: float
    tau: float
    eta: float = 0.0

    def __post_init__(self):
        if self.eps < 0.0 or self.delta < 0.0 or self.eta < 0.0:
            raise ValueError("eps, delta, eta must be nonnegative")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")


def _aligned(pi, arr):
    """Broadcast pi (scalar or length-n vector) against the species axis of arr."""
    pi = np.asarray(pi, dtype=float)
    arr = np.asarray(arr, dtype=float)
    if pi.ndim == 0:
        return pi, arr
    if pi.ndim != 1 or arr.ndim == 0 or pi.shape[0] != arr.shape[0]:
        raise ValueError(f"pi of shape {pi.shape} does not match axis 0 of {arr.shape}")
    return pi.reshape(pi.shape + (1,) * (arr.ndim - 1)), arr


def entropy_h(u, pi):
    """sum_i pi_i (u_i - log u_i); summed over species, kept per batch column."""
    pib, u = _aligned(pi, u)
    return (pib * (u - np.log(u))).sum(axis=0)


def entropy_heps(u, pi, eps: float):
    """h(u) + eps * sum_i u_i (log u_i - 1)."""
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    pib, u = _aligned(pi, u)
    logu = np.log(u)
    return (pib * (u - logu) + eps * u * (logu - 1.0)).sum(axis=0)


def w_from_u(u, pi, eps: float):
    """Entropy variables w_i = pi_i (1 - 1/u_i) + eps log u_i.

    eps > 0 is required: without the log term the gradient is bounded above
    by pi componentwise and cannot be inverted on all of R^n.
    """
    if eps <= 0.0:
        raise ValueError("transform requires eps > 0")
    pib, u = _aligned(pi, u)
    if np.any(u <= 0.0):
        raise ValueError("densities must be positive")
    return pib * (1.0 - 1.0 / u) + eps * np.log(u)


def u_from_w(w, pi, eps: float, x0=None):
    """Invert the entropy-variable map componentwise.

    Solves pi (1 - 1/u) + eps log u = w for u > 0 by working in x = log u,
    where the residual g(x) = pi (1 - exp(-x)) + eps x - w is concave,
    increasing, and free of overflow for any bracket.  Analytic bounds give
    the initial bracket; bisection shrinks it, safeguarded Newton finishes.
    ``x0`` (log of a previous state) skips the bisection stage, which is
    the intended warm start inside time stepping.

    The result u satisfies |w_from_u(u) - w| <= 1e-13 (1 + |w|) for the
    moderate weight sizes (pi up to order 10^2) the solver uses.
    """
    if eps <= 0.0:
        raise ValueError("transform requires eps > 0")
    pib, w = np.broadcast_arrays(*_aligned(pi, w))
    pib = pib.astype(float, copy=False)
    scalar_in = w.ndim == 0
    w = np.atleast_1d(w).astype(float)
    pib = np.atleast_1d(pib)

    # Bracket in log space.  Left end: u <= exp((w - pi)/eps) fails only
    # past the root; right end: u = pi/(pi - w) solves the eps-free
    # equation when w < pi, otherwise exp(w/eps) overshoots.
    lo = np.minimum(0.0, (w - pib) / eps)
    with np.errstate(divide="ignore", over="ignore"):
        hi_small = np.log(pib) - np.log(pib - np.minimum(w, pib * (1.0 - 1e-16)))
    hi = np.maximum(0.0, np.where(w < pib, hi_small, w / eps))

    def g(x):
        # exp(-x) may overflow to inf early in the bracketing; the residual
        # then lands at -inf, which is the correct sign, so silence the noise.
        with np.errstate(over="ignore"):
            return pib * (1.0 - np.exp(-x)) + eps * x - w

    if x0 is None:
        for _ in range(_MAX_ITERS):
            if np.max(hi - lo) <= _BISECT_WIDTH:
                break
            mid = 0.5 * (lo + hi)
            neg = g(mid) < 0.0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        x = 0.5 * (lo + hi)
    else:
        x = np.clip(np.atleast_1d(np.asarray(x0, dtype=float)), lo, hi)

    # The residual floor scales with pi (cancellation in the 1 - exp term).
    tol = _RESIDUAL_SCALE * (1.0 + np.abs(w)) + 8e-16 * pib
    for _ in range(_MAX_ITERS):
        gx = g(x)
        step = gx / (pib * np.exp(-x) + eps)
        done = (np.abs(gx) <= tol) & (np.abs(step) <= _STEP_TOL)
        if done.all():
            break
        neg = gx < 0.0
        lo = np.where(neg & ~done, x, lo)
        hi = np.where(~neg & ~done, x, hi)
        xn = x - step
        bad = (xn <= lo) | (xn >= hi) | ~np.isfinite(xn)
        x = np.where(done, x, np.where(bad, 0.5 * (lo + hi), xn))
    else:
        raise RuntimeError("entropy-variable inversion did not converge")

    # Two clean Newton sweeps with no per-component freezing.  The loop above
    # stops each component at its own iteration, which leaves the error field
    # with small jumps between neighboring components; residual-based callers
    # apply difference operators to u and would amplify those jumps.  The
    # sweeps land every component on the same smooth limit (g is concave and
    # increasing, so the iteration is monotone this close to the root) at the
    # cost of two vector operations.
    for _ in range(2):
        with np.errstate(over="ignore"):
            x = x - g(x) / (pib * np.exp(-x) + eps)

    with np.errstate(over="ignore"):
        u = np.exp(x)  # inf when the root exceeds double range; callers check
    return float(u[0]) if scalar_in else u.reshape(np.shape(w))


def hessian_heps_diag(u, pi, eps: float):
    """Diagonal entries pi_i/u_i^2 + eps/u_i of the entropy Hessian."""
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    pib, u = _aligned(pi, u)
    return pib / u**2 + eps / u


def diffusion_A(u, coeffs: CoefficientSet):
    """Diffusion matrix A_ij(u) = d_ij (a_i0 + sum_k a_ik u_k) + a_ij u_i.

    For batched input (n, m) the result has shape (n, n, m).
    """
    u = np.asarray(u, dtype=float)
    a, a0 = coeffs.a, coeffs.a0
    if u.shape[0] != coeffs.n:
        raise ValueError(f"expected {coeffs.n} species on axis 0, got {u.shape}")
    lin = a0.reshape((-1,) + (1,) * (u.ndim - 1)) + np.einsum("ik,k...->i...", a, u)
    out = a.reshape(a.shape + (1,) * (u.ndim - 1)) * u[:, None]
    idx = np.arange(coeffs.n)
    out[idx, idx] += lin
    return out


def diffusion_Aeps(u, coeffs: CoefficientSet, weights: EntropyWeights, eps: float):
    """A(u) plus the uniformly elliptic correction eps * diag(mu_i/pi_i u_i^2)."""
    u = np.asarray(u, dtype=float)
    out = diffusion_A(u, coeffs)
    if eps != 0.0:
        idx = np.arange(coeffs.n)
        ratio = (weights.mu / weights.pi).reshape((-1,) + (1,) * (u.ndim - 1))
        out[idx, idx] += eps * ratio * u**2
    return out


def pressure_p(u, coeffs: CoefficientSet):
    """Per-species pressure p_i(u) = a_i0 + sum_k a_ik u_k."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != coeffs.n:
        raise ValueError(f"expected {coeffs.n} species on axis 0, got {u.shape}")
    a0 = coeffs.a0.reshape((-1,) + (1,) * (u.ndim - 1))
    return a0 + np.einsum("ik,k...->i...", coeffs.a, u)


def _margin_coefficients(coeffs: CoefficientSet, pi: np.ndarray) -> np.ndarray:
    """Per-species margins 8 pi_i a_ii - sum_{j!=i} pi_j a_ji (min of these is kappa)."""
    diag = np.diag(coeffs.a)
    return 8.0 * pi * diag - (coeffs.a.T @ pi - diag * pi)


def _quadform(hdiag, A, z):
    """z^T diag(hdiag) A z evaluated densely, batch-aware."""
    Az = np.einsum("ij...,j...->i...", A, z)
    return (hdiag * z * Az).sum(axis=0)


def quadform_bound_HA(u, z, coeffs: CoefficientSet, pi):
    """Dense z^T H(u) A(u) z next to its entropy lower bound.

    bound = sum_i pi_i a_i0 z_i^2/u_i^2
          + (1/4) sum_i (8 pi_i a_ii - sum_{j!=i} pi_j a_ji) z_i^2/u_i,

    and value >= bound holds in exact arithmetic for every u > 0, z.
    """
    pi = np.broadcast_to(np.asarray(pi, dtype=float), (coeffs.n,))
    pib, u = _aligned(pi, u)
    z = np.asarray(z, dtype=float)
    value = _quadform(pib / u**2, diffusion_A(u, coeffs), z)
    coef = _margin_coefficients(coeffs, pi).reshape(pib.shape)
    a0 = coeffs.a0.reshape(pib.shape)
    bound = (pib * a0 * z**2 / u**2 + 0.25 * coef * z**2 / u).sum(axis=0)
    return value, bound


def _require_mu(coeffs: CoefficientSet, weights: EntropyWeights):
    a = coeffs.a
    half = 0.5 * (a.sum(axis=1) + a.sum(axis=0) - 2.0 * np.diag(a))
    if np.any(weights.mu < half - 1e-12 * (1.0 + half)):
        raise ValueError("mu below sum_{j!=i}(a_ij + a_ji)/2; bound hypothesis fails")


def quadform_bound_HepsAeps(u, z, coeffs: CoefficientSet, weights: EntropyWeights, eps: float):
    """Dense z^T H_eps(u) A_eps(u) z next to its lower bound.

    The regularization strengthens the unregularized bound by
    2 eps sum_i a_ii z_i^2 + eps^2 sum_i (mu_i/pi_i) u_i z_i^2, provided
    mu dominates the off-diagonal half-sums (checked here).
    """
    _require_mu(coeffs, weights)
    pib, u = _aligned(weights.pi, u)
    z = np.asarray(z, dtype=float)
    hdiag = pib / u**2 + eps / u
    value = _quadform(hdiag, diffusion_Aeps(u, coeffs, weights, eps), z)
    _, base = quadform_bound_HA(u, z, coeffs, weights.pi)
    diag = np.diag(coeffs.a).reshape(pib.shape)
    ratio = (weights.mu / weights.pi).reshape(pib.shape)
    bound = base + (2.0 * eps * diag * z**2 + eps**2 * ratio * u * z**2).sum(axis=0)
    return value, bound


def quadform_bound_shifted(
    u, z, coeffs: CoefficientSet, weights: EntropyWeights, eps: float, eta: float
):
    """Dense z^T H_eps(u + eta) A_eps(u) z next to its shifted lower bound.

    Mixing the shifted Hessian with the unshifted diffusion matrix costs two
    remainder terms of size eta*eps and eta*eps^2; the eps-free mismatch is
    absorbed by the a_i0 part, which is exactly what the ceiling eta0 is for:

    bound = (kappa/4) sum z_i^2/(u_i+eta)
          - eta eps C1 sum z_i^2/(u_i+eta) - eta eps^2 C2 sum z_i^2,

    C1 = 2 max_i (sum_j a_ij + mu_i), C2 = 2 max_i (mu_i/pi_i),
    valid for 0 < eta <= eta0(coeffs).
    """
    _require_mu(coeffs, weights)
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if eta > eta0(coeffs):
        raise ValueError("shift exceeds eta0")
    pib, u = _aligned(weights.pi, u)
    z = np.asarray(z, dtype=float)
    ush = u + eta
    hdiag = pib / ush**2 + eps / ush
    value = _quadform(hdiag, diffusion_Aeps(u, coeffs, weights, eps), z)
    c1 = 2.0 * float(np.max(coeffs.a.sum(axis=1) + weights.mu))
    c2 = 2.0 * float(np.max(weights.mu / weights.pi))
    s_sh = (z**2 / ush).sum(axis=0)
    s_pl = (z**2).sum(axis=0)
    bound = (0.25 * weights.kappa - eta * eps * c1) * s_sh - eta * eps**2 * c2 * s_pl
    return value, bound


def relative_entropy_eta(ubar, values, eta: float, pi, cell_volume: float):
    """Shifted relative entropy sum_i pi_i sum_cells (log(ubar_i+eta) - log(u+eta)) vol.

    Valid only when every species' discrete mass matches its mean ubar_i
    (the linear term of the underlying Bregman distance vanishes under mass
    conservation and is omitted here), so that is a hard precondition.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    values = np.atleast_2d(np.asarray(values, dtype=float))
    ubar = np.atleast_1d(np.asarray(ubar, dtype=float))
    pi = np.broadcast_to(np.asarray(pi, dtype=float), ubar.shape)
    if values.shape[0] != ubar.shape[0]:
        raise ValueError("one mean per species row is required")
    mass = values.sum(axis=1) * cell_volume
    target = ubar * values.shape[1] * cell_volume
    if np.any(np.abs(mass - target) > 1e-10 * (1.0 + np.abs(target))):
        raise ValueError("mass of values does not match ubar; formula invalid")
    gap = np.log(ubar[:, None] + eta) - np.log(values + eta)
    return float((pi * gap.sum(axis=1) * cell_volume).sum())


def csiszar_kullback_rhs(ubar, eta: float, rel_entropy, domain_measure: float):
    """L1-distance ceiling sqrt(8) ||ubar+eta||_L2 sqrt(rel_entropy).

    The L2 norm of the constant ubar_i + eta is (ubar_i + eta) sqrt(measure).
    Accepts per-species arrays for ubar and rel_entropy and broadcasts.
    """
    rel_entropy = np.asarray(rel_entropy, dtype=float)
    if np.any(rel_entropy < 0.0):
        raise ValueError("relative entropy must be nonnegative")
    ubar = np.asarray(ubar, dtype=float)
    out = np.sqrt(8.0) * (ubar + eta) * np.sqrt(domain_measure) * np.sqrt(rel_entropy)
    return float(out) if out.ndim == 0 else out
