"""End-to-end acceptance checks.

Each test exercises one shipped guarantee at its contract tolerance and
prints a single verdict line (visible with `pytest -s` and on failures).
Long runs are shared through module-scoped fixtures so the whole file stays
desk-scale.
"""

import dataclasses
import time

import numpy as np
import pytest

from crossdiff.cli import main
from crossdiff.coefficients import (
    CoefficientSet,
    check_wcd,
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
from crossdiff.grid import Grid
from crossdiff.presets import build_initial, preset_heat1, scenario_presets
from crossdiff.stepper import SchemeConfig, deregularization_study, run
from crossdiff.entropy import RegularizationParams


def verdict(name: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def preset_runs():
    """One >=500-step verified run per shipped preset."""
    runs = {}
    for name, scenario in scenario_presets().items():
        tau = scenario.scheme.reg.tau
        t_end = min(scenario.t_end, 550.0 * tau)
        field = build_initial(scenario)
        runs[name] = (
            scenario,
            run(field, scenario.coeffs, scenario.weights, scenario.scheme, t_end),
        )
    return runs


class TestAcceptance:
    def test_01_cyclic_threshold_sweep(self, capsys):
        started = time.perf_counter()
        code = main(["sweep", "cyclic3", "--a-min", "0.10", "--a-max", "0.15", "--steps", "64"])
        elapsed = time.perf_counter() - started
        out = capsys.readouterr().out
        line = next(l for l in out.splitlines() if l.startswith("threshold (weight search)"))
        threshold = float(line.split(":")[1])
        with capsys.disabled():
            verdict(
                "cyclic threshold sweep",
                code == 0
                and abs(threshold - 0.125) <= 1e-3
                and "flip within 1e-9: YES" in out
                and elapsed < 10.0,
                f"threshold {threshold:.6f} (target 0.125 +- 1e-3), {elapsed:.2f}s",
            )

    def test_02_condition_comparison(self):
        wcd_below = check_wcd(cyclic3_coeffs(0.4, 0.4, 0.4))
        wcd_above = check_wcd(cyclic3_coeffs(0.6, 0.6, 0.6))
        weighted = find_pi_max_kappa(cyclic3_coeffs(0.2, 0.2, 0.2))
        ok = (not wcd_below) and wcd_above and weighted is not None and weighted.kappa > 0
        verdict(
            "condition comparison on the cyclic chain",
            ok,
            f"pairwise at 0.4/0.6: {wcd_below}/{wcd_above}, "
            f"weighted margin at 0.2: {None if weighted is None else f'{weighted.kappa:.4f}'}",
        )

    def test_03_quadform_lower_bounds(self):
        rng = np.random.default_rng(31)
        slack = 1e-10
        per_bound = 100_000
        batch = 500
        started = time.perf_counter()
        counts = np.zeros(3, dtype=int)
        worst = np.full(3, np.inf)
        while counts.min() < per_bound:
            n = int(rng.integers(1, 5))
            a = rng.uniform(0.0, 2.0, size=(n, n))
            a[np.diag_indices(n)] = rng.uniform(0.3, 2.0, size=n)
            coeffs = CoefficientSet(a=a, a0=rng.uniform(0.05, 2.0, size=n))
            weights = find_pi_max_kappa(coeffs)
            if weights is None:
                continue
            u = 10.0 ** rng.uniform(-3.0, 2.0, size=(n, batch))
            z = rng.normal(size=(n, batch))
            eps = float(10.0 ** rng.uniform(-6.0, 0.0))
            for idx, (value, bound) in enumerate(
                (
                    quadform_bound_HA(u, z, coeffs, weights.pi),
                    quadform_bound_HepsAeps(u, z, coeffs, weights, eps),
                    quadform_bound_shifted(u, z, coeffs, weights, eps, 0.5 * eta0(coeffs)),
                )
            ):
                margin = value - bound + slack * (1.0 + np.abs(value))
                worst[idx] = min(worst[idx], float(margin.min()))
                counts[idx] += batch
        elapsed = time.perf_counter() - started
        verdict(
            "quadratic form lower bounds",
            bool(np.all(worst >= 0.0)) and elapsed < 30.0,
            f"{counts.min()} samples per bound, worst slack margins {worst}, {elapsed:.1f}s",
        )

    def test_04_transform_bijection(self):
        rng = np.random.default_rng(41)
        worst = 0.0
        for _ in range(100):
            u = 10.0 ** rng.uniform(-5.0, 3.0, size=1000)
            pi = 10.0 ** rng.uniform(-2.0, 2.0, size=1000)
            eps = float(10.0 ** rng.uniform(-8.0, 1.0))
            back = u_from_w(w_from_u(u, pi, eps), pi, eps)
            worst = max(worst, float(np.max(np.abs(back - u) / u)))
        verdict(
            "entropy transform bijection",
            worst <= 1e-12,
            f"100000 round trips, worst relative error {worst:.3e}",
        )

    def test_05_mass_conservation_and_drift(self):
        scenario = scenario_presets()["skt-two-species"]
        scenario = dataclasses.replace(scenario, grid=Grid(cells=(64,), lengths=(1.0,)))
        field = build_initial(scenario)
        base = scenario.scheme
        exact = SchemeConfig(
            reg=dataclasses.replace(base.reg, delta=0.0),
            newton=base.newton,
            scheme_mode="standard",
        )
        conserve = run(field, scenario.coeffs, scenario.weights, exact, t_end=1.0)
        drifting = SchemeConfig(
            reg=dataclasses.replace(base.reg, delta=1e-3),
            newton=base.newton,
            scheme_mode="standard",
        )
        drift = run(field, scenario.coeffs, scenario.weights, drifting, t_end=0.3)
        verdict(
            "mass conservation and drift identity",
            conserve.steps == 1000
            and conserve.mass_identity_max_err <= 1e-12
            and drift.mass_identity_max_err <= 1e-10,
            f"delta=0 over {conserve.steps} steps err {conserve.mass_identity_max_err:.2e} "
            f"(tol 1e-12); delta>0 over {drift.steps} steps err "
            f"{drift.mass_identity_max_err:.2e} (tol 1e-10)",
        )

    def test_06_entropy_inequality_presets(self, preset_runs):
        lines = []
        ok = True
        for name, (scenario, res) in preset_runs.items():
            ok = ok and res.steps >= 500 and res.entropy_failures == 0
            lines.append(f"{name}: {res.steps} steps, {res.entropy_failures} failures")
        verdict("discrete entropy inequality on all presets", ok, "; ".join(lines))

    def test_07_decay_to_constant_state(self):
        scenario = scenario_presets()["skt-two-species-asym"]
        field = build_initial(scenario)
        started = time.perf_counter()
        res = run(
            field,
            scenario.coeffs,
            scenario.weights,
            scenario.scheme,
            t_end=20.0,
            stop_when_l1_below=1e-6,
        )
        elapsed = time.perf_counter() - started
        final_l1 = float(np.max(res.reports[-1].ck_l1))
        verdict(
            "decay to the constant state",
            res.heta_max_increase <= 1e-10
            and res.ck_violations == 0
            and res.t_final <= 20.0
            and final_l1 <= 1e-6
            and elapsed < 60.0,
            f"reached max L1 distance {final_l1:.2e} at t = {res.t_final:.3f} "
            f"({res.steps} steps, {elapsed:.1f}s); relative entropy max increase "
            f"{res.heta_max_increase:.2e}, CK violations {res.ck_violations}",
        )

    def test_08_deregularization_cauchy(self):
        scenario = scenario_presets()["skt-two-species"]
        field = build_initial(scenario)
        study = deregularization_study(
            field,
            scenario.coeffs,
            scenario.weights,
            scenario.scheme,
            (1e-3, 1e-4, 1e-5),
            t_end=scenario.t_end,
        )
        d = study.distances
        verdict(
            "de-regularization Cauchy behavior",
            study.completed and d.shape == (2,) and d[0] > d[1] > 0.0,
            f"distances {d}",
        )

    def test_09_self_convergence(self):
        base = preset_heat1()
        coarse_cells = 32
        levels = [(coarse_cells * 2**k, 8e-4 / 2**k) for k in range(3)]
        reference = (256, 1e-4)
        t_end = 0.02

        def solve(cells, tau):
            scenario = dataclasses.replace(base, grid=Grid(cells=(cells,), lengths=(1.0,)))
            scheme = SchemeConfig(
                reg=dataclasses.replace(base.scheme.reg, tau=tau),
                newton=base.scheme.newton,
                scheme_mode=base.scheme.scheme_mode,
            )
            field = build_initial(scenario)
            res = run(
                field, scenario.coeffs, scenario.weights, scheme, t_end, adapt_tau=False
            )
            return res.final.values

        def to_coarse(values):
            n, cells = values.shape
            return values.reshape(n, coarse_cells, cells // coarse_cells).mean(axis=2)

        ref = to_coarse(solve(*reference))
        vol = 1.0 / coarse_cells
        errors = [
            float(np.sqrt(((to_coarse(solve(cells, tau)) - ref) ** 2).sum() * vol))
            for cells, tau in levels
        ]
        ratios = [errors[k] / errors[k + 1] for k in range(len(errors) - 1)]
        verdict(
            "self-convergence under joint refinement",
            all(r >= 1.8 for r in ratios),
            f"errors {np.array(errors)}, ratios {np.array(ratios)} (need >= 1.8)",
        )

    def test_10_duality_monitor(self, preset_runs):
        lines = []
        ok = True
        for name, (scenario, res) in preset_runs.items():
            cubic_ok = bool(np.all(np.isfinite(res.cubic_integral)))
            l3_ok = bool(np.all(np.isfinite(res.l3_cubed_integral)))
            ok = ok and cubic_ok and l3_ok and res.cubic_dominates
            lines.append(
                f"{name}: max accumulated u^2 p {res.cubic_integral.max():.3g}, "
                f"dominance {res.cubic_dominates}"
            )
        verdict("duality monitor stays finite and dominant", ok, "; ".join(lines))
