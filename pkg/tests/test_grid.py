"""Grids, finite-volume operators, and the cosine-transform Poisson solve."""

import dataclasses
import math

import numpy as np
import pytest

from crossdiff.coefficients import CoefficientSet, EntropyWeights, kappa, mu_defaults
from crossdiff.grid import (
    FieldNorms,
    Grid,
    SpeciesField,
    discrete_norms,
    face_gradient,
    fisher,
    flux_divergence,
    neg_laplacian,
    neumann_poisson_solve,
)


def random_coeffs(rng, n):
    a = rng.uniform(0.0, 2.0, size=(n, n))
    a0 = rng.uniform(0.0, 2.0, size=n)
    return CoefficientSet(a=a, a0=a0)


def random_weights(rng, coeffs):
    pi = rng.uniform(0.2, 5.0, size=coeffs.n)
    return EntropyWeights(pi=pi, mu=mu_defaults(coeffs), kappa=kappa(coeffs, pi))


def dense_aeps_point(u, coeffs, weights, eps):
    # Oracle: the diffusion matrix at one state, written entrywise.
    n = coeffs.n
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = coeffs.a[i, j] * u[i]
            if i == j:
                out[i, j] += coeffs.a0[i] + sum(coeffs.a[i, k] * u[k] for k in range(n))
                out[i, j] += eps * (weights.mu[i] / weights.pi[i]) * u[i] ** 2
    return out


def flux_div_oracle_1d(u, coeffs, weights, eps, h):
    # Oracle: per-face fluxes and the telescoping divergence, all loops.
    n, cells = u.shape
    flux = np.zeros((n, cells + 1))
    for f in range(1, cells):
        mean = 0.5 * (u[:, f - 1] + u[:, f])
        grad = (u[:, f] - u[:, f - 1]) / h
        flux[:, f] = dense_aeps_point(mean, coeffs, weights, eps) @ grad
    div = (flux[:, 1:] - flux[:, :-1]) / h
    return div, flux


def flux_div_oracle_2d(u, coeffs, weights, eps, hx, hy):
    n, cx, cy = u.shape
    div = np.zeros_like(u)
    for jy in range(cy):
        for f in range(1, cx):
            mean = 0.5 * (u[:, f - 1, jy] + u[:, f, jy])
            grad = (u[:, f, jy] - u[:, f - 1, jy]) / hx
            fl = dense_aeps_point(mean, coeffs, weights, eps) @ grad
            div[:, f - 1, jy] += fl / hx
            div[:, f, jy] -= fl / hx
    for jx in range(cx):
        for f in range(1, cy):
            mean = 0.5 * (u[:, jx, f - 1] + u[:, jx, f])
            grad = (u[:, jx, f] - u[:, jx, f - 1]) / hy
            fl = dense_aeps_point(mean, coeffs, weights, eps) @ grad
            div[:, jx, f - 1] += fl / hy
            div[:, jx, f] -= fl / hy
    return div


class TestGrid:
    def test_1d_geometry(self):
        g = Grid(cells=(8,), lengths=(2.0,))
        assert g.dim == 1
        assert g.h == (0.25,)
        assert g.cell_volume == 0.25
        assert g.measure == 2.0
        assert g.total_cells == 8
        centers = g.centers()[0]
        assert centers[0] == 0.125 and centers[-1] == 2.0 - 0.125

    def test_2d_geometry(self):
        g = Grid(cells=(4, 8), lengths=(1.0, 2.0))
        assert g.dim == 2
        assert g.h == (0.25, 0.25)
        assert g.cell_volume == 0.0625
        assert g.measure == 2.0
        assert g.total_cells == 32

    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(cells=(4, 4, 4), lengths=(1.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            Grid(cells=(1,), lengths=(1.0,))
        with pytest.raises(ValueError):
            Grid(cells=(4,), lengths=(-1.0,))
        with pytest.raises(ValueError):
            Grid(cells=(4, 4), lengths=(1.0,))

    def test_frozen(self):
        g = Grid(cells=(4,), lengths=(1.0,))
        with pytest.raises(dataclasses.FrozenInstanceError):
            g.cells = (8,)


class TestSpeciesField:
    def test_mass_and_means(self):
        g = Grid(cells=(4,), lengths=(2.0,))
        f = SpeciesField(g, np.array([[1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 1.0, 1.0]]))
        assert np.allclose(f.mass(), [5.0, 2.0])
        assert np.allclose(f.means(), [2.5, 1.0])
        assert f.n == 2

    def test_validation(self):
        g = Grid(cells=(4,), lengths=(1.0,))
        with pytest.raises(ValueError):
            SpeciesField(g, np.ones((2, 5)))
        with pytest.raises(ValueError):
            SpeciesField(g, np.array([[1.0, 1.0, -1.0, 1.0]]))
        with pytest.raises(ValueError):
            SpeciesField(g, np.array([[1.0, 1.0, np.nan, 1.0]]))


class TestFaceGradient:
    def test_linear_profile(self):
        g = Grid(cells=(16,), lengths=(1.0,))
        u = 3.0 * g.centers()[0][None, :] + 1.0
        (grad,) = face_gradient(g, u)
        assert grad.shape == (1, 15)
        assert np.max(np.abs(grad - 3.0)) <= 1e-12

    def test_matches_loop(self):
        rng = np.random.default_rng(10)
        g = Grid(cells=(9,), lengths=(2.0,))
        u = rng.uniform(0.1, 3.0, size=(2, 9))
        (grad,) = face_gradient(g, u)
        want = np.array(
            [[(u[i, c + 1] - u[i, c]) / g.h[0] for c in range(8)] for i in range(2)]
        )
        assert np.array_equal(grad, want)

    def test_2d_shapes(self):
        g = Grid(cells=(4, 5), lengths=(1.0, 1.0))
        grads = face_gradient(g, np.ones((3, 4, 5)))
        assert grads[0].shape == (3, 3, 5)
        assert grads[1].shape == (3, 4, 4)
        assert np.all(grads[0] == 0.0) and np.all(grads[1] == 0.0)


class TestFluxDivergence:
    def test_matches_loop_oracle_1d(self):
        rng = np.random.default_rng(20)
        g = Grid(cells=(12,), lengths=(1.5,))
        for _ in range(30):
            coeffs = random_coeffs(rng, 3)
            weights = random_weights(rng, coeffs)
            eps = rng.choice([0.0, 0.3])
            u = rng.uniform(0.1, 4.0, size=(3, 12))
            got = flux_divergence(SpeciesField(g, u), coeffs, weights, eps)
            want, _ = flux_div_oracle_1d(u, coeffs, weights, eps, g.h[0])
            scale = np.max(np.abs(want)) + 1.0
            assert np.max(np.abs(got - want)) <= 1e-12 * scale

    def test_matches_loop_oracle_2d(self):
        rng = np.random.default_rng(21)
        g = Grid(cells=(5, 7), lengths=(1.0, 2.0))
        for _ in range(10):
            coeffs = random_coeffs(rng, 2)
            weights = random_weights(rng, coeffs)
            u = rng.uniform(0.1, 4.0, size=(2, 5, 7))
            got = flux_divergence(SpeciesField(g, u), coeffs, weights, 0.2)
            want = flux_div_oracle_2d(u, coeffs, weights, 0.2, g.h[0], g.h[1])
            scale = np.max(np.abs(want)) + 1.0
            assert np.max(np.abs(got - want)) <= 1e-12 * scale

    def test_conservation_telescopes(self):
        # Total rate per species vanishes to rounding, measured against the
        # size of the individual face contributions that cancel.
        rng = np.random.default_rng(22)
        g = Grid(cells=(40,), lengths=(1.0,))
        for _ in range(50):
            coeffs = random_coeffs(rng, 2)
            weights = random_weights(rng, coeffs)
            u = rng.uniform(0.05, 8.0, size=(2, 40))
            rates = flux_divergence(SpeciesField(g, u), coeffs, weights, 0.1)
            _, flux = flux_div_oracle_1d(u, coeffs, weights, 0.1, g.h[0])
            total = rates.sum(axis=1) * g.cell_volume
            scale = np.abs(flux).sum(axis=1) * g.cell_volume / g.h[0]
            assert np.all(np.abs(total) <= 1e-13 * scale + 1e-300), (
                f"mass leak {total} vs face scale {scale}"
            )

    def test_conservation_2d(self):
        rng = np.random.default_rng(23)
        g = Grid(cells=(8, 6), lengths=(1.0, 1.0))
        coeffs = random_coeffs(rng, 2)
        weights = random_weights(rng, coeffs)
        u = rng.uniform(0.1, 5.0, size=(2, 8, 6))
        rates = flux_divergence(SpeciesField(g, u), coeffs, weights, 0.05)
        total = np.abs(rates.sum(axis=(1, 2))) * g.cell_volume
        assert np.all(total <= 1e-12 * np.abs(rates).sum() * g.cell_volume + 1e-300)

    def test_constant_is_exact_zero(self):
        g = Grid(cells=(10,), lengths=(1.0,))
        coeffs = CoefficientSet(a=np.array([[1.0, 0.5], [0.5, 1.0]]), a0=np.ones(2))
        weights = EntropyWeights(pi=np.ones(2), mu=np.ones(2), kappa=kappa(coeffs, np.ones(2)))
        u = np.full((2, 10), 1.7)
        rates = flux_divergence(SpeciesField(g, u), coeffs, weights, 0.4)
        assert np.all(rates == 0.0)

    def test_reduces_to_laplacian(self):
        # One species, a11 = 0, unit a10, eps = 0: the flux is the plain
        # gradient, so the rate is exactly minus the discrete -Laplacian.
        rng = np.random.default_rng(24)
        g = Grid(cells=(17,), lengths=(1.0,))
        coeffs = CoefficientSet(a=np.array([[0.0]]), a0=np.array([1.0]))
        weights = EntropyWeights(pi=np.ones(1), mu=np.ones(1), kappa=kappa(coeffs, np.ones(1)))
        u = rng.uniform(0.5, 2.0, size=(1, 17))
        rates = flux_divergence(SpeciesField(g, u), coeffs, weights, 0.0)
        assert np.array_equal(rates, -neg_laplacian(g, u))

    def test_rejects_nonpositive(self):
        g = Grid(cells=(4,), lengths=(1.0,))
        coeffs = CoefficientSet(a=np.array([[1.0]]), a0=np.array([1.0]))
        weights = EntropyWeights(pi=np.ones(1), mu=np.ones(1), kappa=kappa(coeffs, np.ones(1)))
        with pytest.raises(ValueError):
            flux_divergence(
                SpeciesField(g, np.array([[1.0, 0.0, 1.0, 1.0]])), coeffs, weights, 0.1
            )


class TestNegLaplacian:
    def test_matches_loop_1d(self):
        rng = np.random.default_rng(30)
        g = Grid(cells=(11,), lengths=(1.0,))
        v = rng.normal(size=11)
        h = g.h[0]
        want = np.zeros(11)
        for c in range(11):
            left = (v[c] - v[c - 1]) / h if c > 0 else 0.0
            right = (v[c + 1] - v[c]) / h if c < 10 else 0.0
            want[c] = -(right - left) / h
        got = neg_laplacian(g, v)
        assert np.max(np.abs(got - want)) <= 1e-12 * (np.max(np.abs(want)) + 1.0)

    def test_symmetric_and_summation_by_parts(self):
        # sum_c v (-Lap w) vol equals the face sum of grad v . grad w, which
        # is the identity the entropy bookkeeping leans on.
        rng = np.random.default_rng(31)
        for cells, lengths in [((25,), (2.0,)), ((6, 9), (1.0, 3.0))]:
            g = Grid(cells=cells, lengths=lengths)
            v = rng.normal(size=cells)
            w = rng.normal(size=cells)
            lhs = (v * neg_laplacian(g, w)).sum() * g.cell_volume
            sym = (w * neg_laplacian(g, v)).sum() * g.cell_volume
            rhs = sum(
                (gv * gw).sum() * g.cell_volume
                for gv, gw in zip(face_gradient(g, v), face_gradient(g, w))
            )
            assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(rhs))
            assert abs(lhs - sym) <= 1e-12 * (1.0 + abs(rhs))

    def test_constant_nullspace(self):
        g = Grid(cells=(7, 4), lengths=(1.0, 1.0))
        assert np.all(neg_laplacian(g, np.full((7, 4), 3.3)) == 0.0)


class TestPoisson:
    def test_cosine_mode_is_exact_eigenvector(self):
        # rhs = cos(pi x) sampled at centers is a discrete cosine mode, so
        # the solve divides by its eigenvalue exactly.
        g = Grid(cells=(32,), lengths=(1.0,))
        x = g.centers()[0]
        rhs = np.cos(np.pi * x)
        lam = (2.0 - 2.0 * math.cos(math.pi / 32)) / g.h[0] ** 2
        psi = neumann_poisson_solve(g, rhs)
        assert np.max(np.abs(psi - rhs / lam)) <= 1e-12

    def test_cosine_second_order_convergence(self):
        errs = []
        for cells in (16, 32, 64):
            g = Grid(cells=(cells,), lengths=(1.0,))
            x = g.centers()[0]
            rhs = np.cos(np.pi * x)
            psi = neumann_poisson_solve(g, rhs)
            errs.append(np.max(np.abs(psi - rhs / math.pi**2)))
        r1 = errs[0] / errs[1]
        r2 = errs[1] / errs[2]
        assert 3.6 <= r1 <= 4.4 and 3.6 <= r2 <= 4.4, f"ratios {r1}, {r2}"

    def test_round_trip_1d(self):
        rng = np.random.default_rng(40)
        g = Grid(cells=(48,), lengths=(2.0,))
        rhs = rng.normal(size=48)
        rhs -= rhs.mean()
        psi = neumann_poisson_solve(g, rhs)
        back = neg_laplacian(g, psi)
        assert np.max(np.abs(back - rhs)) <= 1e-10 * (1.0 + np.max(np.abs(rhs)))
        assert abs(psi.sum() * g.cell_volume) <= 1e-12

    def test_round_trip_2d(self):
        rng = np.random.default_rng(41)
        g = Grid(cells=(12, 20), lengths=(1.0, 2.5))
        rhs = rng.normal(size=(12, 20))
        rhs -= rhs.mean()
        psi = neumann_poisson_solve(g, rhs)
        back = neg_laplacian(g, psi)
        assert np.max(np.abs(back - rhs)) <= 1e-10 * (1.0 + np.max(np.abs(rhs)))
        assert abs(psi.sum() * g.cell_volume) <= 1e-12

    def test_rejects_nonzero_mean(self):
        g = Grid(cells=(8,), lengths=(1.0,))
        with pytest.raises(ValueError):
            neumann_poisson_solve(g, np.ones(8))

    def test_zero_rhs(self):
        g = Grid(cells=(8,), lengths=(1.0,))
        assert np.all(neumann_poisson_solve(g, np.zeros(8)) == 0.0)


class TestNorms:
    def test_hand_values(self):
        g = Grid(cells=(2,), lengths=(1.0,))
        norms = discrete_norms(SpeciesField(g, np.array([[3.0, 4.0]])))
        assert isinstance(norms, FieldNorms)
        assert norms.l1[0] == pytest.approx(3.5)
        assert norms.l2[0] == pytest.approx(math.sqrt(12.5))
        assert norms.l3[0] == pytest.approx((45.5) ** (1.0 / 3.0))

    def test_matches_loop(self):
        rng = np.random.default_rng(50)
        g = Grid(cells=(6, 5), lengths=(2.0, 1.0))
        u = rng.uniform(0.0, 3.0, size=(2, 6, 5))
        norms = discrete_norms(SpeciesField(g, u))
        for i in range(2):
            flat = u[i].ravel()
            assert norms.l1[i] == pytest.approx(sum(abs(x) for x in flat) * g.cell_volume)
            assert norms.l2[i] == pytest.approx(
                math.sqrt(sum(x**2 for x in flat) * g.cell_volume)
            )
            assert norms.l3[i] == pytest.approx(
                (sum(abs(x) ** 3 for x in flat) * g.cell_volume) ** (1 / 3)
            )


class TestFisher:
    def test_hand_value(self):
        # sqrt(u) = 1, 2, 3, 4 on four cells of width 1/4: each of the three
        # interior faces contributes (1 / 0.25)^2 * 0.25 = 4.
        g = Grid(cells=(4,), lengths=(1.0,))
        f = SpeciesField(g, np.array([[1.0, 4.0, 9.0, 16.0]]))
        assert fisher(f)[0] == pytest.approx(12.0)

    def test_matches_loop_2d(self):
        rng = np.random.default_rng(60)
        g = Grid(cells=(4, 3), lengths=(1.0, 1.5))
        u = rng.uniform(0.1, 2.0, size=(2, 4, 3))
        got = fisher(SpeciesField(g, u))
        root = np.sqrt(u)
        want = np.zeros(2)
        for i in range(2):
            for jy in range(3):
                for f in range(1, 4):
                    want[i] += ((root[i, f, jy] - root[i, f - 1, jy]) / g.h[0]) ** 2
            for jx in range(4):
                for f in range(1, 3):
                    want[i] += ((root[i, jx, f] - root[i, jx, f - 1]) / g.h[1]) ** 2
        want *= g.cell_volume
        assert np.allclose(got, want, rtol=1e-12)

    def test_constant_is_zero(self):
        g = Grid(cells=(9,), lengths=(1.0,))
        assert np.all(fisher(SpeciesField(g, np.full((1, 9), 2.0))) == 0.0)
