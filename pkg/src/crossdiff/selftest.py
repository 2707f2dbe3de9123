"""Embedded deterministic property suite behind the `selftest` subcommand.

Each check re-verifies one structural guarantee with fixed seeds: transform
bijectivity, quadratic-form lower bounds, discrete conservation, the Poisson
round trip, the dominance threshold of the cyclic chain, the step identities
(mass, drift, entropy inequality), and run determinism.  Sample counts are
sized for a few seconds of wall time; the pytest suite runs the same
properties at acceptance scale.
"""

import dataclasses

import numpy as np

from crossdiff.coefficients import (
    CoefficientSet,
    cyclic3_coeffs,
    cyclic3_pi,
    eta0,
    find_pi_max_kappa,
)
from crossdiff.entropy import (
    quadform_bound_HA,
    quadform_bound_HepsAeps,
    quadform_bound_shifted,
    u_from_w,
    w_from_u,
)
from crossdiff.grid import Grid, SpeciesField, flux_divergence, neg_laplacian, neumann_poisson_solve
from crossdiff.presets import build_initial, preset_skt_two_species, scenario_presets
from crossdiff.stepper import SchemeConfig, duality_monitor, run

QF_SLACK = 1e-10


def _random_pair(rng, n):
    a = rng.uniform(0.0, 2.0, size=(n, n))
    a[np.diag_indices(n)] = rng.uniform(0.3, 2.0, size=n)
    coeffs = CoefficientSet(a=a, a0=rng.uniform(0.05, 2.0, size=n))
    weights = find_pi_max_kappa(coeffs)
    return coeffs, weights


def check_transform_round_trip():
    rng = np.random.default_rng(2024)
    worst = 0.0
    # The transforms vectorize over u and pi at fixed eps, so the samples are
    # grouped into batches sharing one eps each.
    for _ in range(20):
        u = 10.0 ** rng.uniform(-5.0, 3.0, size=1000)
        pi = 10.0 ** rng.uniform(-2.0, 2.0, size=1000)
        eps = float(10.0 ** rng.uniform(-8.0, 1.0))
        back = u_from_w(w_from_u(u, pi, eps), pi, eps)
        worst = max(worst, float(np.max(np.abs(back - u) / u)))
    assert worst <= 1e-12, f"round-trip relative error {worst:.3e}"


def check_quadform_bounds():
    rng = np.random.default_rng(2025)
    batch = 500
    for trial in range(30):
        n = int(rng.integers(1, 5))
        coeffs, weights = _random_pair(rng, n)
        if weights is None:
            continue
        u = 10.0 ** rng.uniform(-3.0, 2.0, size=(n, batch))
        z = rng.normal(size=(n, batch))
        eps = float(10.0 ** rng.uniform(-6.0, 0.0))
        v, b = quadform_bound_HA(u, z, coeffs, weights.pi)
        assert np.all(v >= b - QF_SLACK * (1.0 + np.abs(v))), f"plain bound broke, trial {trial}"
        v, b = quadform_bound_HepsAeps(u, z, coeffs, weights, eps)
        assert np.all(v >= b - QF_SLACK * (1.0 + np.abs(v))), f"eps bound broke, trial {trial}"
        try:
            eta = 0.5 * eta0(coeffs)
        except ValueError:
            continue
        if not np.isfinite(eta) or eta <= 0.0:
            continue
        v, b = quadform_bound_shifted(u, z, coeffs, weights, eps, eta)
        assert np.all(v >= b - QF_SLACK * (1.0 + np.abs(v))), f"shifted bound broke, trial {trial}"


def check_conservation():
    rng = np.random.default_rng(2026)
    for trial in range(100):
        n = int(rng.integers(1, 4))
        coeffs, weights = _random_pair(rng, n)
        if weights is None:
            continue
        grid = Grid(cells=(17,), lengths=(1.5,))
        field = SpeciesField(grid, rng.uniform(0.1, 3.0, size=(n, 17)))
        rates = flux_divergence(field, coeffs, weights, eps=1e-3)
        total = np.abs(rates.sum(axis=1)) * grid.cell_volume
        scale = (np.abs(rates) * grid.cell_volume).sum(axis=1) + 1.0
        assert np.all(total <= 1e-13 * scale), f"mass leak on trial {trial}"


def check_poisson_round_trip():
    rng = np.random.default_rng(2027)
    for grid in (Grid(cells=(64,), lengths=(1.0,)), Grid(cells=(12, 9), lengths=(1.0, 2.0))):
        rhs = rng.normal(size=grid.cells)
        rhs -= rhs.mean()
        rhs -= rhs.mean()
        psi = neumann_poisson_solve(grid, rhs)
        back = neg_laplacian(grid, psi)
        err = np.max(np.abs(back - rhs))
        assert err <= 1e-10 * np.max(np.abs(rhs)), f"round trip error {err:.3e} on {grid.cells}"


def check_dominance_threshold():
    lo, hi = 0.1, 0.15
    assert find_pi_max_kappa(cyclic3_coeffs(hi, hi, hi)) is not None
    assert find_pi_max_kappa(cyclic3_coeffs(lo, lo, lo)) is None
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if find_pi_max_kappa(cyclic3_coeffs(mid, mid, mid)) is None:
            lo = mid
        else:
            hi = mid
    thr = 0.5 * (lo + hi)
    assert abs(thr - 0.125) <= 1e-3, f"threshold {thr} is off"
    shift = 0.125 * 1e-9
    assert cyclic3_pi(0.125 + shift, 0.125 + shift, 0.125 + shift) is not None
    assert cyclic3_pi(0.125 - shift, 0.125 - shift, 0.125 - shift) is None


def _small_scene():
    scenario = preset_skt_two_species()
    scenario = dataclasses.replace(scenario, grid=Grid(cells=(48,), lengths=(1.0,)))
    return scenario, build_initial(scenario)


def check_mass_identities():
    scenario, field = _small_scene()
    base = scenario.scheme
    exact = SchemeConfig(
        reg=dataclasses.replace(base.reg, delta=0.0), newton=base.newton, scheme_mode="standard"
    )
    res = run(field, scenario.coeffs, scenario.weights, exact, t_end=0.05)
    assert res.mass_identity_max_err <= 1e-12, f"conservation error {res.mass_identity_max_err:.3e}"
    drift = SchemeConfig(
        reg=dataclasses.replace(base.reg, delta=5e-3), newton=base.newton, scheme_mode="standard"
    )
    res = run(field, scenario.coeffs, scenario.weights, drift, t_end=0.03)
    assert res.mass_identity_max_err <= 1e-10, f"drift mismatch {res.mass_identity_max_err:.3e}"


def check_entropy_inequality():
    scenario, field = _small_scene()
    res = run(field, scenario.coeffs, scenario.weights, scenario.scheme, t_end=0.06)
    assert res.entropy_failures == 0, f"{res.entropy_failures} entropy check failures"
    assert res.entropy_min_margin >= 0.0, f"margin {res.entropy_min_margin:.3e}"
    assert res.dissipation_negative_steps == 0


def check_duality_monitor():
    rng = np.random.default_rng(2028)
    scenario, _ = _small_scene()
    for _ in range(20):
        field = SpeciesField(scenario.grid, rng.uniform(0.05, 4.0, size=(2, 48)))
        rec = duality_monitor(field, scenario.coeffs)
        assert rec.cubic_dominates
        assert np.all(np.isfinite(rec.grad_psi_sq)) and np.all(rec.grad_psi_sq >= 0.0)


def check_determinism():
    scenario, field = _small_scene()
    first = run(field, scenario.coeffs, scenario.weights, scenario.scheme, t_end=0.03)
    second = run(field, scenario.coeffs, scenario.weights, scenario.scheme, t_end=0.03)
    assert np.array_equal(first.final.values, second.final.values), "trajectories diverged"
    assert first.reports[-1].entropy_heps == second.reports[-1].entropy_heps


def check_presets_load():
    presets = scenario_presets()
    assert len(presets) >= 5, f"only {len(presets)} presets"
    for name, scenario in presets.items():
        field = build_initial(scenario)
        assert np.all(field.values > 0.0), f"preset {name} has nonpositive initial data"
        assert scenario.weights.kappa > 0.0, f"preset {name} lacks a positive margin"


CHECKS = (
    ("transform round trip", check_transform_round_trip),
    ("quadratic form lower bounds", check_quadform_bounds),
    ("discrete conservation", check_conservation),
    ("poisson round trip", check_poisson_round_trip),
    ("dominance threshold", check_dominance_threshold),
    ("mass identities", check_mass_identities),
    ("entropy inequality", check_entropy_inequality),
    ("duality monitor", check_duality_monitor),
    ("determinism", check_determinism),
    ("presets load", check_presets_load),
)


def run_selftest(stream) -> bool:
    """Run every check; report one line each; True when all pass."""
    all_ok = True
    for name, check in CHECKS:
        try:
            check()
        except AssertionError as exc:
            all_ok = False
            print(f"FAIL  {name}: {exc}", file=stream)
        except Exception as exc:  # a crash is a failure, not a crash of the harness
            all_ok = False
            print(f"FAIL  {name}: unexpected {type(exc).__name__}: {exc}", file=stream)
        else:
            print(f"ok    {name}", file=stream)
    return all_ok
