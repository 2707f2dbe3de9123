"""Implicit Euler in entropy variables, with the structure checks attached.

One step solves, for the unknown per-cell entropy variables w,

    u(w) - prev = tau * div(A_eps(u(w)) grad u(w)) - tau * delta * (-Lap w + w),

by a damped Newton iteration.  Solving in w rather than u makes every
iterate, and therefore every accepted state, strictly positive: u(w) is the
inverse of the regularized entropy gradient and lands in (0, inf)^n for any
real w.

The same discrete operators that define the residual are reused to verify,
after each step, the three structural identities the scheme is built around:
the entropy inequality (entropy plus tau times dissipation plus the delta
term does not exceed the previous entropy), the mass identity (per-species
mass moves by exactly -delta*tau*sum(w)), and nonnegative dissipation.
Verification recomputes everything from the accepted fields, so a wrong
stepper cannot vouch for itself.

The Newton matrix freezes the face diffusion matrices at the current
iterate (their u-derivative is dropped).  That costs the quadratic tail of
Newton but keeps assembly banded and cheap; convergence is still decided by
the true residual, so the approximation never changes what is accepted.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from crossdiff.coefficients import CoefficientSet, EntropyWeights, eta0
from crossdiff.entropy import (
    RegularizationParams,
    csiszar_kullback_rhs,
    diffusion_Aeps,
    entropy_heps,
    hessian_heps_diag,
    pressure_p,
    relative_entropy_eta,
    u_from_w,
    w_from_u,
)
from crossdiff.grid import (
    SpeciesField,
    _face_means,
    _flux_divergence_values,
    discrete_norms,
    face_gradient,
    fisher,
    neg_laplacian,
    neumann_poisson_solve,
)

SCHEME_MODES = ("standard", "delta_eq_eps")

# Relative Armijo decrease per unit step length; weak on purpose, the line
# search only needs to rule out divergence, not optimize.
_ARMIJO = 1e-4


class StepRejected(RuntimeError):
    """Newton failed to reach the residual tolerance; the caller may retry with smaller tau."""

    def __init__(self, iters: int, residual: float, reason: str):
        super().__init__(
            f"step rejected after {iters} Newton iterations "
            f"(residual {residual:.3e}): {reason}"
        )
        self.iters = iters
        self.residual = residual
        self.reason = reason


@dataclass(frozen=True)
class NewtonConfig:
    """Inner-solver knobs: residual tolerance is relative to 1 + max|prev|."""

    tol: float = 1e-13
    max_iters: int = 40
    damping: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("newton tol must be positive")
        if self.max_iters < 1:
            raise ValueError("newton max_iters must be at least 1")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be nonnegative")


@dataclass(frozen=True)
class EntropyCheckConfig:
    enabled: bool = True
    slack: float = 1e-8

    def __post_init__(self):
        if self.slack < 0.0:
            raise ValueError("slack must be nonnegative")


@dataclass(frozen=True)
class SchemeConfig:
    """Everything one step needs besides the coefficients and the state.

    scheme_mode "delta_eq_eps" ties the stabilization weight to the entropy
    regularization (the 1D simplification); the stored reg is rewritten so
    downstream code never has to re-check the mode.
    """

    reg: RegularizationParams
    newton: NewtonConfig = NewtonConfig()
    scheme_mode: str = "standard"
    entropy_check: EntropyCheckConfig = EntropyCheckConfig()

    def __post_init__(self):
        if self.scheme_mode not in SCHEME_MODES:
            raise ValueError(f"scheme_mode must be one of {SCHEME_MODES}")
        if self.scheme_mode == "delta_eq_eps" and self.reg.delta != self.reg.eps:
            object.__setattr__(
                self, "reg", dataclasses.replace(self.reg, delta=self.reg.eps)
            )


@dataclass(frozen=True)
class StepReport:
    """Everything observed about one accepted step (or the initial state).

    Scalars are totals over the domain; per-species quantities are arrays.
    mass_drift_predicted is -delta*tau*sum(w)*vol, the exact discrete drift;
    h_eta_species carries the unit-weight shifted relative entropies whose
    pi-weighted sum is h_eta.
    """

    step: int
    time: float
    tau: float
    newton_iters: int
    newton_residual: float
    entropy_prev: float
    entropy_heps: float
    dissipation: float
    delta_term: float
    mass_prev: np.ndarray
    mass: np.ndarray
    mass_drift_predicted: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    l3: np.ndarray
    fisher: np.ndarray
    grad_psi_sq: np.ndarray
    cubic: np.ndarray
    cubic_dominates: bool
    eta: float
    h_eta: float
    h_eta_species: np.ndarray
    ck_rhs: np.ndarray
    ck_l1: np.ndarray


@dataclass(frozen=True)
class DualityRecord:
    grad_psi_sq: np.ndarray
    cubic: np.ndarray
    cubic_dominates: bool


def default_eta(coeffs: CoefficientSet) -> float:
    """Half the admissible ceiling, capped at 0.1; plain 0.1 when no ceiling exists."""
    try:
        ceiling = eta0(coeffs)
    except ValueError:
        return 0.1
    if not math.isfinite(ceiling):
        return 0.1
    return min(0.5 * ceiling, 0.1)


def _maxabs(arr) -> float:
    m = float(np.max(np.abs(arr)))
    return m if math.isfinite(m) else math.inf


def _total_entropy(values, pi, eps, vol) -> float:
    return float(np.sum(entropy_heps(values, pi, eps)) * vol)


def _dissipation_and_delta(grid, u, w, coeffs, weights, reg):
    """Face-sum dissipation sum grad w . A_eps grad u, and delta*(|grad w|^2 + |w|^2)."""
    vol = grid.cell_volume
    gus = face_gradient(grid, u)
    gws = face_gradient(grid, w)
    diss = 0.0
    quad = float((w**2).sum()) * vol
    for ax in range(grid.dim):
        af = diffusion_Aeps(_face_means(grid, u, ax), coeffs, weights, reg.eps)
        flux = np.einsum("ij...,j...->i...", af, gus[ax])
        diss += float((gws[ax] * flux).sum()) * vol
        quad += float((gws[ax] ** 2).sum()) * vol
    return diss, reg.delta * quad


def duality_monitor(field: SpeciesField, coeffs: CoefficientSet) -> DualityRecord:
    """Per-species integral of |grad psi_i|^2 with -Lap psi_i = u_i - mean, and of u_i^2 p_i(u).

    Also reports whether u^2 p(u) >= a_ii u^3 held on every cell, which is
    the pointwise inequality linking the two functionals.
    """
    grid, values = field.grid, field.values
    vol = grid.cell_volume
    press = pressure_p(values, coeffs)
    spatial = tuple(range(1, values.ndim))
    cubic = (values**2 * press).sum(axis=spatial) * vol
    diag = np.diag(coeffs.a).reshape((-1,) + (1,) * grid.dim)
    dominates = bool(np.all(values**2 * press >= diag * values**3 * (1.0 - 1e-12)))
    grad_sq = np.zeros(field.n)
    for i in range(field.n):
        rhs = values[i] - values[i].mean()
        # Second centering: the first leaves a residual sum at rounding level
        # of the field itself, which fails the solver's zero-mean gate once
        # the fluctuations decay below ~1e-6 of the field.  Re-centering puts
        # the residual at rounding level of the fluctuations instead.
        rhs -= rhs.mean()
        psi = neumann_poisson_solve(grid, rhs)
        grad_sq[i] = sum(float((g**2).sum()) for g in face_gradient(grid, psi)) * vol
    return DualityRecord(grad_psi_sq=grad_sq, cubic=cubic, cubic_dominates=dominates)


def _observe(field: SpeciesField, coeffs, weights, eta: float):
    """Instantaneous monitors shared by step reports and the initial report."""
    grid, values = field.grid, field.values
    vol = grid.cell_volume
    norms = discrete_norms(field)
    dual = duality_monitor(field, coeffs)
    means = field.means()
    spatial = tuple(range(1, values.ndim))
    h_species = np.array(
        [
            relative_entropy_eta(
                [means[i]], [values[i].ravel()], eta, [1.0], vol
            )
            for i in range(field.n)
        ]
    )
    # Nonnegative in exact arithmetic (Jensen); clamp away rounding dips so
    # the square root in the distance bound stays defined near equilibrium.
    h_species = np.maximum(h_species, 0.0)
    ck_l1 = np.abs(values - means.reshape((-1,) + (1,) * grid.dim)).sum(axis=spatial) * vol
    return {
        "l1": norms.l1,
        "l2": norms.l2,
        "l3": norms.l3,
        "fisher": fisher(field),
        "grad_psi_sq": dual.grad_psi_sq,
        "cubic": dual.cubic,
        "cubic_dominates": dual.cubic_dominates,
        "eta": eta,
        "h_eta": float(weights.pi @ h_species),
        "h_eta_species": h_species,
        "ck_rhs": csiszar_kullback_rhs(means, eta, h_species, grid.measure),
        "ck_l1": ck_l1,
    }


def _newton_matrix_1d(grid, u, coeffs, weights, reg):
    """Banded Newton matrix for the 1D step, diagonal-ordered for solve_banded.

    Unknown ordering p = cell*n + species.  Entries follow from
    d u_i / d w_i = 1/Hess_i and the frozen face matrices: the cell-diagonal
    block, the two neighbor blocks, and the delta-stabilization stencil.
    """
    n, cells = u.shape
    h = grid.h[0]
    r = reg.tau / h**2
    td = reg.tau * reg.delta
    dinv = 1.0 / hessian_heps_diag(u, weights.pi, reg.eps)
    af = diffusion_Aeps(0.5 * (u[:, :-1] + u[:, 1:]), coeffs, weights, reg.eps)
    ssum = np.zeros((n, n, cells))
    ssum[:, :, :-1] += af
    ssum[:, :, 1:] += af
    deg = np.full(cells, 2.0)
    deg[0] = deg[-1] = 1.0
    idx = np.arange(n)
    dg = r * ssum * dinv[None, :, :]
    dg[idx, idx, :] += dinv + td * (deg / h**2 + 1.0)
    up = -r * af * dinv[None, :, 1:]
    lo = -r * af * dinv[None, :, :-1]
    up[idx, idx, :] -= td / h**2
    lo[idx, idx, :] -= td / h**2
    ubw = 2 * n - 1
    ab = np.zeros((2 * ubw + 1, n * cells))
    for i in range(n):
        for k in range(n):
            ab[ubw + i - k, k::n] = dg[i, k]
            ab[ubw - n + i - k, n + k :: n] = up[i, k]
            ab[ubw + n + i - k, k : (cells - 1) * n : n] = lo[i, k]
    return ab, ubw


def _newton_matrix_2d(grid, u, coeffs, weights, reg):
    """Sparse Newton matrix for the 2D step, ordering p = (ix*cy + iy)*n + species."""
    n, cx, cy = u.shape
    hx, hy = grid.h
    rx, ry = reg.tau / hx**2, reg.tau / hy**2
    td = reg.tau * reg.delta
    dinv = 1.0 / hessian_heps_diag(u, weights.pi, reg.eps)
    afx = diffusion_Aeps(0.5 * (u[:, :-1, :] + u[:, 1:, :]), coeffs, weights, reg.eps)
    afy = diffusion_Aeps(0.5 * (u[:, :, :-1] + u[:, :, 1:]), coeffs, weights, reg.eps)
    ssum = np.zeros((n, n, cx, cy))
    ssum[:, :, :-1, :] += rx * afx
    ssum[:, :, 1:, :] += rx * afx
    ssum[:, :, :, :-1] += ry * afy
    ssum[:, :, :, 1:] += ry * afy
    idx = np.arange(n)
    degx = np.full(cx, 2.0)
    degx[[0, -1]] = 1.0
    degy = np.full(cy, 2.0)
    degy[[0, -1]] = 1.0
    dg = ssum * dinv[None]
    dg[idx, idx] += dinv + td * (degx[:, None] / hx**2 + degy[None, :] / hy**2 + 1.0)
    upx = -rx * afx * dinv[None, :, 1:, :]
    lox = -rx * afx * dinv[None, :, :-1, :]
    upy = -ry * afy * dinv[None, :, :, 1:]
    loy = -ry * afy * dinv[None, :, :, :-1]
    upx[idx, idx] -= td / hx**2
    lox[idx, idx] -= td / hx**2
    upy[idx, idx] -= td / hy**2
    loy[idx, idx] -= td / hy**2

    cell = np.arange(cx)[:, None] * cy + np.arange(cy)[None, :]

    def block(data, rowcell, colcell):
        rows = np.broadcast_to(
            rowcell[None, None] * n + idx[:, None, None, None], data.shape
        )
        cols = np.broadcast_to(
            colcell[None, None] * n + idx[None, :, None, None], data.shape
        )
        return data.ravel(), rows.ravel(), cols.ravel()

    parts = [
        block(dg, cell, cell),
        block(upx, cell[:-1, :], cell[1:, :]),
        block(lox, cell[1:, :], cell[:-1, :]),
        block(upy, cell[:, :-1], cell[:, 1:]),
        block(loy, cell[:, 1:], cell[:, :-1]),
    ]
    data = np.concatenate([p[0] for p in parts])
    rows = np.concatenate([p[1] for p in parts])
    cols = np.concatenate([p[2] for p in parts])
    size = n * cx * cy
    return coo_matrix((data, (rows, cols)), shape=(size, size)).tocsc()


def _solve_newton(grid, u, coeffs, weights, reg, resid):
    rhs = -np.moveaxis(resid, 0, -1).ravel()
    if grid.dim == 1:
        ab, ubw = _newton_matrix_1d(grid, u, coeffs, weights, reg)
        x = solve_banded((ubw, ubw), ab, rhs)
    else:
        x = splu(_newton_matrix_2d(grid, u, coeffs, weights, reg)).solve(rhs)
    n = u.shape[0]
    return np.moveaxis(x.reshape(grid.cells + (n,)), -1, 0)


def implicit_step(
    prev: SpeciesField,
    coeffs: CoefficientSet,
    weights: EntropyWeights,
    cfg: SchemeConfig,
    step_index: int = 1,
    time_start: float = 0.0,
):
    """One implicit Euler step; returns (next state, solution w, report).

    Raises StepRejected when Newton cannot reach tol*(1 + max|prev|) within
    the iteration and backtracking budgets; the state is left untouched.
    """
    grid = prev.grid
    reg = cfg.reg
    if reg.eps <= 0.0:
        raise ValueError("the scheme requires eps > 0")
    uprev = prev.values
    if np.any(uprev <= 0.0):
        raise ValueError("previous state must be strictly positive")
    if weights.kappa <= 0.0:
        warnings.warn(
            f"kappa = {weights.kappa:.3e} is not positive; "
            "the entropy structure is not certified for these weights",
            RuntimeWarning,
        )
    pi, eps, delta, tau = weights.pi, reg.eps, reg.delta, reg.tau
    tol = cfg.newton.tol * (1.0 + float(np.max(uprev)))

    def residual(w, u):
        with np.errstate(over="ignore", invalid="ignore"):
            out = (u - uprev) - tau * _flux_divergence_values(
                grid, u, coeffs, weights, eps
            )
            if delta != 0.0:
                out += tau * delta * (neg_laplacian(grid, w) + w)
        return out

    w = w_from_u(uprev, pi, eps)
    u = u_from_w(w, pi, eps, x0=np.log(uprev))
    res = residual(w, u)
    rnorm = _maxabs(res)
    iters = 0
    while rnorm > tol:
        if iters >= cfg.newton.max_iters:
            raise StepRejected(iters, rnorm, "iteration cap reached")
        dw = _solve_newton(grid, u, coeffs, weights, reg, res)
        logu = np.log(u)
        s = 1.0
        accepted = False
        for _ in range(cfg.newton.max_backtracks + 1):
            w_try = w + s * dw
            try:
                u_try = u_from_w(w_try, pi, eps, x0=logu)
            except RuntimeError:
                u_try = None
            if (
                u_try is not None
                and np.all(np.isfinite(u_try))
                and np.all(u_try > 0.0)
            ):
                res_try = residual(w_try, u_try)
                rn_try = _maxabs(res_try)
                if rn_try <= (1.0 - _ARMIJO * s) * rnorm or rn_try <= tol:
                    accepted = True
                    break
            s *= cfg.newton.damping
        if not accepted:
            raise StepRejected(iters, rnorm, "line search stalled")
        w, u, res, rnorm = w_try, u_try, res_try, rn_try
        iters += 1

    nxt = SpeciesField(grid, u)
    vol = grid.cell_volume
    spatial = tuple(range(1, u.ndim))
    diss, delta_term = _dissipation_and_delta(grid, u, w, coeffs, weights, reg)
    eta = reg.eta if reg.eta > 0.0 else default_eta(coeffs)
    obs = _observe(nxt, coeffs, weights, eta)
    report = StepReport(
        step=step_index,
        time=time_start + tau,
        tau=tau,
        newton_iters=iters,
        newton_residual=rnorm,
        entropy_prev=_total_entropy(uprev, pi, eps, vol),
        entropy_heps=_total_entropy(u, pi, eps, vol),
        dissipation=diss,
        delta_term=delta_term,
        mass_prev=prev.mass(),
        mass=nxt.mass(),
        mass_drift_predicted=-delta * tau * w.sum(axis=spatial) * vol,
        **obs,
    )
    return nxt, w, report


def verify_entropy_step(
    prev: SpeciesField,
    nxt: SpeciesField,
    w: np.ndarray,
    coeffs: CoefficientSet,
    weights: EntropyWeights,
    cfg: SchemeConfig,
):
    """Recompute the discrete entropy inequality for one step from its fields.

    Checks entropy(next) + tau*(dissipation + delta_term) <= entropy(prev)
    + slack*(1 + |entropy(prev)|), everything reassembled from prev/next/w
    rather than taken from the report.  Returns (ok, margin) with margin the
    slack left over (nonnegative exactly when ok).
    """
    reg = cfg.reg
    vol = prev.grid.cell_volume
    before = _total_entropy(prev.values, weights.pi, reg.eps, vol)
    after = _total_entropy(nxt.values, weights.pi, reg.eps, vol)
    diss, delta_term = _dissipation_and_delta(
        prev.grid, nxt.values, w, coeffs, weights, reg
    )
    slack = cfg.entropy_check.slack * (1.0 + abs(before))
    margin = before + slack - (after + reg.tau * (diss + delta_term))
    return bool(margin >= 0.0), float(margin)


def regularize_initial(field: SpeciesField) -> SpeciesField:
    """Clamp to [1e-8, 1e8] and rescale per species to keep the original mass."""
    mass = field.mass()
    if np.any(mass <= 0.0):
        raise ValueError("every species needs positive initial mass")
    clipped = np.clip(field.values, 1e-8, 1e8)
    spatial = tuple(range(1, clipped.ndim))
    ratio = mass / (clipped.sum(axis=spatial) * field.grid.cell_volume)
    return SpeciesField(
        field.grid, clipped * ratio.reshape((-1,) + (1,) * field.grid.dim)
    )


def _initial_report(field, coeffs, weights, reg, eta):
    n = field.n
    vol = field.grid.cell_volume
    mass = field.mass()
    h0 = _total_entropy(field.values, weights.pi, reg.eps, vol)
    obs = _observe(field, coeffs, weights, eta)
    return StepReport(
        step=0,
        time=0.0,
        tau=0.0,
        newton_iters=0,
        newton_residual=0.0,
        entropy_prev=h0,
        entropy_heps=h0,
        dissipation=0.0,
        delta_term=0.0,
        mass_prev=mass,
        mass=mass,
        mass_drift_predicted=np.zeros(n),
        **obs,
    )


@dataclass
class RunResult:
    """Trajectory summary: cadence-sampled reports plus whole-run tallies.

    mass_identity_max_err is the worst per-step relative gap between the
    observed mass change and the exact -delta*tau*sum(w) prediction (zero
    prediction for delta = 0, so it doubles as the conservation error).
    heta_max_increase is the worst relative uptick of the shifted relative
    entropy between accepted steps; the integrals are rectangle-rule time
    accumulations per species.
    """

    reports: list
    final: SpeciesField
    t_final: float
    steps: int
    rejections: int
    stopped_early: bool
    entropy_failures: int
    entropy_min_margin: float
    mass_identity_max_err: float
    heta_max_increase: float
    ck_violations: int
    dissipation_negative_steps: int
    l3_cubed_integral: np.ndarray
    fisher_integral: np.ndarray
    grad_psi_sq_integral: np.ndarray
    cubic_integral: np.ndarray
    cubic_dominates: bool
    trajectory: np.ndarray | None = None
    times: np.ndarray | None = None


def run(
    initial: SpeciesField,
    coeffs: CoefficientSet,
    weights: EntropyWeights,
    cfg: SchemeConfig,
    t_end: float,
    *,
    cadence: int = 10,
    sink=None,
    stop_when_l1_below: float | None = None,
    adapt_tau: bool = True,
    capture_trajectory: bool = False,
) -> RunResult:
    """March implicit steps to t_end, verifying structure along the way.

    tau halves on a rejected step (floor 1e-8 of the configured tau) and
    doubles after an accepted one, capped at the configured value; with
    adapt_tau=False any rejection is fatal, which keeps time grids aligned
    for trajectory comparisons.  The last step is shortened to land on t_end
    exactly.  stop_when_l1_below ends the run early once every species'
    L1 distance to its mean falls below the threshold.

    Every accepted report goes to ``sink``; the returned list keeps the
    initial report, every cadence-th step, and the final step.
    """
    if t_end < 0.0:
        raise ValueError("t_end must be nonnegative")
    if cadence < 1:
        raise ValueError("cadence must be at least 1")
    state = regularize_initial(initial)
    n = state.n
    tau0 = cfg.reg.tau
    tau = tau0
    tau_floor = 1e-8 * tau0
    eta = cfg.reg.eta if cfg.reg.eta > 0.0 else default_eta(coeffs)

    first = _initial_report(state, coeffs, weights, cfg.reg, eta)
    reports = [first]
    if sink is not None:
        sink(first)
    traj = [state.values.copy()] if capture_trajectory else None
    times = [0.0] if capture_trajectory else None

    steps = rejections = 0
    entropy_failures = ck_violations = diss_negative = 0
    entropy_min_margin = math.inf
    mass_err = 0.0
    heta_prev = first.h_eta
    heta_max_increase = 0.0
    l3_cubed = np.zeros(n)
    fisher_int = np.zeros(n)
    gpsi_int = np.zeros(n)
    cubic_int = np.zeros(n)
    cubic_dom = first.cubic_dominates
    stopped_early = False
    t = 0.0
    last = first

    while t < t_end - 1e-12 * max(t_end, 1.0):
        tau_step = min(tau, t_end - t)
        cfg_step = cfg
        if tau_step != cfg.reg.tau:
            cfg_step = dataclasses.replace(
                cfg, reg=dataclasses.replace(cfg.reg, tau=tau_step)
            )
        try:
            nxt, w, rep = implicit_step(
                state, coeffs, weights, cfg_step, step_index=steps + 1, time_start=t
            )
        except StepRejected as exc:
            if not adapt_tau:
                raise RuntimeError(f"step {steps + 1} rejected with fixed tau: {exc}") from exc
            rejections += 1
            tau *= 0.5
            if tau < tau_floor:
                raise RuntimeError(
                    "time step collapsed below its floor after repeated Newton failures"
                ) from exc
            continue

        steps += 1
        t += tau_step
        if cfg.entropy_check.enabled:
            ok, margin = verify_entropy_step(state, nxt, w, coeffs, weights, cfg_step)
            entropy_min_margin = min(entropy_min_margin, margin)
            if not ok:
                entropy_failures += 1
        gap = np.abs((rep.mass - rep.mass_prev) - rep.mass_drift_predicted)
        mass_err = max(mass_err, float(np.max(gap / np.maximum(rep.mass_prev, 1e-300))))
        if rep.dissipation < -1e-12 * (1.0 + abs(rep.entropy_heps)):
            diss_negative += 1
        if np.any(rep.ck_l1 > rep.ck_rhs * (1.0 + 1e-10) + 1e-12):
            ck_violations += 1
        heta_max_increase = max(
            heta_max_increase, (rep.h_eta - heta_prev) / (1.0 + abs(heta_prev))
        )
        heta_prev = rep.h_eta
        l3_cubed += tau_step * rep.l3**3
        fisher_int += tau_step * rep.fisher
        gpsi_int += tau_step * rep.grad_psi_sq
        cubic_int += tau_step * rep.cubic
        cubic_dom = cubic_dom and rep.cubic_dominates

        state = nxt
        last = rep
        if sink is not None:
            sink(rep)
        if capture_trajectory:
            traj.append(state.values.copy())
            times.append(t)
        if steps % cadence == 0:
            reports.append(rep)
        if stop_when_l1_below is not None and float(np.max(rep.ck_l1)) <= stop_when_l1_below:
            stopped_early = True
            break
        if adapt_tau:
            tau = min(2.0 * tau, tau0)

    if reports[-1] is not last:
        reports.append(last)
    return RunResult(
        reports=reports,
        final=state,
        t_final=t,
        steps=steps,
        rejections=rejections,
        stopped_early=stopped_early,
        entropy_failures=entropy_failures,
        entropy_min_margin=entropy_min_margin,
        mass_identity_max_err=mass_err,
        heta_max_increase=heta_max_increase,
        ck_violations=ck_violations,
        dissipation_negative_steps=diss_negative,
        l3_cubed_integral=l3_cubed,
        fisher_integral=fisher_int,
        grad_psi_sq_integral=gpsi_int,
        cubic_integral=cubic_int,
        cubic_dominates=cubic_dom,
        trajectory=np.array(traj) if capture_trajectory else None,
        times=np.array(times) if capture_trajectory else None,
    )


@dataclass(frozen=True)
class StudyResult:
    eps: tuple
    distances: np.ndarray
    completed: bool
    runs_completed: int
    message: str = ""


def _trajectory_distance(vol, times, traj_a, traj_b) -> float:
    """Space-time L2 distance of two same-grid trajectories, rectangle rule in time."""
    if traj_a.shape != traj_b.shape:
        raise ValueError("trajectories do not share a time grid")
    dt = np.diff(times)
    sq = ((traj_a[1:] - traj_b[1:]) ** 2).sum(axis=tuple(range(1, traj_a.ndim))) * vol
    return float(math.sqrt(float((dt * sq).sum())))


def deregularization_study(
    initial: SpeciesField,
    coeffs: CoefficientSet,
    weights: EntropyWeights,
    cfg: SchemeConfig,
    eps_list,
    t_end: float,
    max_workers: int | None = None,
) -> StudyResult:
    """Rerun one scenario across decreasing eps (delta tied to eps), fixed tau.

    Reports the space-time L2 distance between consecutive runs' trajectories;
    Cauchy behavior shows up as a decreasing distance sequence.  The runs are
    independent and execute on a thread pool; results are consumed in list
    order, so a failed run aborts the study with the distances gathered from
    the runs before it, regardless of completion order.
    """
    eps_values = tuple(float(e) for e in eps_list)
    if any(e <= 0.0 for e in eps_values):
        raise ValueError("eps values must be positive")
    if any(b > a for a, b in zip(eps_values, eps_values[1:])):
        raise ValueError("eps_list must be nonincreasing")
    vol = initial.grid.cell_volume

    def run_one(eps: float) -> RunResult:
        cfg_eps = SchemeConfig(
            reg=dataclasses.replace(cfg.reg, eps=eps, delta=eps),
            newton=cfg.newton,
            scheme_mode="delta_eq_eps",
            entropy_check=cfg.entropy_check,
        )
        return run(
            initial,
            coeffs,
            weights,
            cfg_eps,
            t_end,
            cadence=10**9,
            adapt_tau=False,
            capture_trajectory=True,
        )

    prev_run = None
    distances = []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(run_one, eps) for eps in eps_values]
        for count, future in enumerate(futures):
            try:
                res = future.result()
            except RuntimeError as exc:
                for pending in futures[count + 1 :]:
                    pending.cancel()
                return StudyResult(
                    eps=eps_values,
                    distances=np.array(distances),
                    completed=False,
                    runs_completed=count,
                    message=str(exc),
                )
            if prev_run is not None:
                distances.append(
                    _trajectory_distance(vol, res.times, prev_run.trajectory, res.trajectory)
                )
            prev_run = res
    return StudyResult(
        eps=eps_values,
        distances=np.array(distances),
        completed=True,
        runs_completed=len(eps_values),
    )
