"""Named ready-to-run scenarios and initial-profile construction.

A scenario bundles everything a simulation needs: coefficients, entropy
weights, grid, scheme calibration, an initial-condition descriptor, and
output settings.  The shipped presets cover the regimes the test suite
exercises: a three-species cyclic chain, a symmetric reversible pair, a
one-sided pair that only the weighted dominance condition admits, a scalar
porous-medium-like sanity case, and a strongly coupled segregation case.
"""

from dataclasses import dataclass, field

import numpy as np

from crossdiff.coefficients import (
    CoefficientSet,
    EntropyWeights,
    cyclic3_coeffs,
    find_pi_max_kappa,
    kappa,
    mu_defaults,
)
from crossdiff.entropy import RegularizationParams
from crossdiff.grid import Grid, SpeciesField
from crossdiff.stepper import SchemeConfig

INITIAL_KINDS = ("constant", "bumps", "steps", "random")

DEFAULT_FLOOR = 1e-3


@dataclass(frozen=True)
class InitialSpec:
    """Descriptor for strictly positive initial density profiles.

    Geometry parameters are fractions of the domain length per axis, so the
    same descriptor works on any grid.  ``bumps`` places one gaussian per
    species (a product of axis factors in 2D), ``steps`` is a smooth tanh
    transition along the first axis, ``random`` adds seeded uniform noise on
    top of the base level.  All profiles are clamped from below at ``floor``
    so the logarithmic entropy stays finite.
    """

    kind: str
    base: tuple
    amplitude: tuple = ()
    center: tuple = ()
    width: tuple = ()
    seed: int = 0
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial kind {self.kind!r}, expected one of {INITIAL_KINDS}")
        n = len(self.base)
        if n < 1:
            raise ValueError("base must give one level per species")
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        for name, default in (("amplitude", 0.0), ("center", 0.5), ("width", 0.1)):
            vals = getattr(self, name)
            if not vals:
                vals = (default,) * n
            if len(vals) != n:
                raise ValueError(f"{name} must have {n} entries to match base")
            object.__setattr__(self, name, tuple(float(v) for v in vals))
        if any(not np.isfinite(v) for v in self.base + self.amplitude + self.center):
            raise ValueError("initial profile parameters must be finite")
        if any(not np.isfinite(v) or v <= 0.0 for v in self.width):
            raise ValueError("width entries must be positive")
        if not np.isfinite(self.floor) or self.floor <= 0.0:
            raise ValueError("floor must be positive")

    @property
    def n(self) -> int:
        return len(self.base)


@dataclass(frozen=True)
class OutputSpec:
    """Diagnostics cadence and optional file destinations."""

    cadence: int = 10
    diagnostics: str | None = None
    final_state: str | None = None

    def __post_init__(self):
        if self.cadence < 1:
            raise ValueError("cadence must be at least 1")


@dataclass(frozen=True)
class ScenarioConfig:
    label: str
    coeffs: CoefficientSet
    weights: EntropyWeights
    grid: Grid
    scheme: SchemeConfig
    initial: InitialSpec
    t_end: float
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0

    def __post_init__(self):
        if not self.label:
            raise ValueError("label must be nonempty")
        if not np.isfinite(self.t_end) or self.t_end < 0.0:
            raise ValueError("t_end must be finite and nonnegative")
        n = self.coeffs.n
        if self.weights.pi.shape != (n,):
            raise ValueError(f"weights are for {self.weights.pi.size} species, coefficients for {n}")
        if self.initial.n != n:
            raise ValueError(f"initial profile has {self.initial.n} species, coefficients {n}")


def weights_for(coeffs: CoefficientSet, pi=None) -> EntropyWeights:
    """Entropy weights from explicit pi, or the margin-maximizing search."""
    if pi is not None:
        pi = np.asarray(pi, dtype=float)
        return EntropyWeights(pi=pi, mu=mu_defaults(coeffs), kappa=kappa(coeffs, pi))
    found = find_pi_max_kappa(coeffs)
    if found is None:
        raise ValueError("no weights give a positive dominance margin; pass pi explicitly")
    return found


def build_initial(scenario: ScenarioConfig) -> SpeciesField:
    """Materialize the scenario's initial profile on its grid."""
    spec = scenario.initial
    grid = scenario.grid
    axes = [c / length for c, length in zip(grid.centers(), grid.lengths)]
    values = np.empty((spec.n,) + grid.cells)
    for i in range(spec.n):
        if spec.kind == "constant":
            values[i] = spec.base[i]
        elif spec.kind == "bumps":
            bump = np.ones(grid.cells)
            for ax, xi in enumerate(axes):
                shape = [1] * grid.dim
                shape[ax] = -1
                arg = (xi - spec.center[i]) / spec.width[i]
                bump = bump * np.exp(-0.5 * arg**2).reshape(shape)
            values[i] = spec.base[i] + spec.amplitude[i] * bump
        elif spec.kind == "steps":
            arg = (axes[0] - spec.center[i]) / spec.width[i]
            profile = spec.base[i] + spec.amplitude[i] * 0.5 * (1.0 + np.tanh(arg))
            values[i] = profile.reshape((-1,) + (1,) * (grid.dim - 1))
        else:
            rng = np.random.default_rng(scenario.seed + spec.seed + i)
            values[i] = spec.base[i] + spec.amplitude[i] * rng.random(grid.cells)
    values = np.maximum(values, spec.floor)
    return SpeciesField(grid, values)


def preset_cyclic3(diag: float = 0.2) -> ScenarioConfig:
    """Three-species cyclic chain; dominance holds through the weight search."""
    coeffs = cyclic3_coeffs(diag, diag, diag)
    return ScenarioConfig(
        label="cyclic3",
        coeffs=coeffs,
        weights=weights_for(coeffs),
        grid=Grid(cells=(96,), lengths=(1.0,)),
        scheme=SchemeConfig(
            reg=RegularizationParams(eps=1e-4, delta=1e-4, tau=1e-3),
            scheme_mode="delta_eq_eps",
        ),
        initial=InitialSpec(
            kind="bumps",
            base=(0.8, 1.0, 1.2),
            amplitude=(0.5, 0.4, 0.3),
            center=(0.25, 0.5, 0.75),
            width=(0.08, 0.1, 0.12),
        ),
        t_end=0.6,
    )


def preset_skt_two_species() -> ScenarioConfig:
    """Symmetric reversible pair: balanced weights (1/2, 1/2) work directly."""
    coeffs = CoefficientSet(a=np.array([[1.0, 0.5], [0.5, 1.0]]), a0=np.ones(2))
    return ScenarioConfig(
        label="skt-two-species",
        coeffs=coeffs,
        weights=weights_for(coeffs, pi=(0.5, 0.5)),
        grid=Grid(cells=(128,), lengths=(1.0,)),
        scheme=SchemeConfig(
            reg=RegularizationParams(eps=1e-4, delta=1e-4, tau=1e-3),
            scheme_mode="delta_eq_eps",
        ),
        initial=InitialSpec(
            kind="bumps",
            base=(0.8, 0.9),
            amplitude=(0.6, 0.5),
            center=(0.35, 0.65),
            width=(0.1, 0.12),
        ),
        t_end=0.55,
    )


def preset_skt_two_species_asym() -> ScenarioConfig:
    """One-sided coupling: no reversible weights, no pairwise dominance.

    The weight search still finds a positive margin, which is exactly the
    regime the relaxed condition buys.  Shipped with the exact-conservation
    scheme (delta 0) and a long horizon so the decay to the spatial means
    plays out.
    """
    coeffs = CoefficientSet(a=np.array([[0.2, 1.0], [0.0, 0.2]]), a0=np.ones(2))
    return ScenarioConfig(
        label="skt-two-species-asym",
        coeffs=coeffs,
        weights=weights_for(coeffs),
        grid=Grid(cells=(200,), lengths=(1.0,)),
        scheme=SchemeConfig(
            reg=RegularizationParams(eps=1e-6, delta=0.0, tau=1e-3),
        ),
        initial=InitialSpec(
            kind="bumps",
            base=(0.7, 1.1),
            amplitude=(0.8, 0.5),
            center=(0.3, 0.7),
            width=(0.1, 0.15),
        ),
        t_end=20.0,
    )


def preset_heat1() -> ScenarioConfig:
    """Scalar sanity case, diffusion 1 + 0.2 u."""
    coeffs = CoefficientSet(a=np.array([[0.1]]), a0=np.array([1.0]))
    return ScenarioConfig(
        label="heat1",
        coeffs=coeffs,
        weights=weights_for(coeffs, pi=(1.0,)),
        grid=Grid(cells=(64,), lengths=(1.0,)),
        scheme=SchemeConfig(
            reg=RegularizationParams(eps=1e-4, delta=1e-4, tau=1e-3),
            scheme_mode="delta_eq_eps",
        ),
        initial=InitialSpec(
            kind="bumps", base=(1.0,), amplitude=(0.8,), center=(0.5,), width=(0.12,)
        ),
        t_end=0.55,
    )


def preset_segregation() -> ScenarioConfig:
    """Strong cross-coupling with species starting on opposite halves."""
    coeffs = CoefficientSet(a=np.array([[0.5, 3.0], [3.0, 0.5]]), a0=np.full(2, 0.05))
    return ScenarioConfig(
        label="segregation",
        coeffs=coeffs,
        weights=weights_for(coeffs, pi=(0.5, 0.5)),
        grid=Grid(cells=(96,), lengths=(1.0,)),
        scheme=SchemeConfig(
            reg=RegularizationParams(eps=1e-4, delta=1e-4, tau=5e-4),
            scheme_mode="delta_eq_eps",
        ),
        initial=InitialSpec(
            kind="steps",
            base=(1.05, 0.05),
            amplitude=(-1.0, 1.0),
            center=(0.5, 0.5),
            width=(0.06, 0.06),
        ),
        t_end=0.3,
    )


def scenario_presets() -> dict:
    """All shipped scenarios, keyed by label, built fresh on every call."""
    scenarios = (
        preset_cyclic3(),
        preset_skt_two_species(),
        preset_skt_two_species_asym(),
        preset_heat1(),
        preset_segregation(),
    )
    return {s.label: s for s in scenarios}
