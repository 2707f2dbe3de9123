"""Entropy-stable simulation of cross-diffusion population systems.

Subpackage map:

* :mod:`crossdiff.coefficients` : coefficient data, dominance/balance certificates
* :mod:`crossdiff.entropy`      : entropy densities, variable transforms, bounds
* :mod:`crossdiff.grid`         : cell-centered grids and discrete operators
* :mod:`crossdiff.stepper`      : implicit entropy-variable time stepping
* :mod:`crossdiff.presets`      : named ready-to-run scenarios
* :mod:`crossdiff.config`       : scenario configuration loading
* :mod:`crossdiff.reporting`    : diagnostics and field snapshot I/O
* :mod:`crossdiff.cli`          : command-line entry point
"""

from crossdiff.coefficients import (
    CoefficientSet,
    EntropyWeights,
    check_detailed_balance,
    check_wcd,
    cyclic3_coeffs,
    cyclic3_pi,
    eta0,
    find_pi_max_kappa,
    kappa,
    mu_defaults,
)
from crossdiff.entropy import (
    RegularizationParams,
    entropy_h,
    entropy_heps,
    u_from_w,
    w_from_u,
)
from crossdiff.grid import Grid, SpeciesField, discrete_norms, fisher, flux_divergence
from crossdiff.stepper import (
    NewtonConfig,
    RunResult,
    SchemeConfig,
    StepRejected,
    StepReport,
    deregularization_study,
    duality_monitor,
    implicit_step,
    run,
    verify_entropy_step,
)
from crossdiff.presets import (
    InitialSpec,
    OutputSpec,
    ScenarioConfig,
    build_initial,
    scenario_presets,
    weights_for,
)
from crossdiff.config import ConfigError, load_config
from crossdiff.reporting import (
    read_diagnostics,
    read_field,
    write_diagnostics,
    write_field,
)

__all__ = [
    "CoefficientSet",
    "ConfigError",
    "EntropyWeights",
    "Grid",
    "InitialSpec",
    "NewtonConfig",
    "OutputSpec",
    "RegularizationParams",
    "RunResult",
    "ScenarioConfig",
    "SchemeConfig",
    "SpeciesField",
    "StepRejected",
    "StepReport",
    "build_initial",
    "check_detailed_balance",
    "check_wcd",
    "cyclic3_coeffs",
    "cyclic3_pi",
    "deregularization_study",
    "discrete_norms",
    "duality_monitor",
    "entropy_h",
    "entropy_heps",
    "eta0",
    "find_pi_max_kappa",
    "fisher",
    "flux_divergence",
    "implicit_step",
    "kappa",
    "load_config",
    "mu_defaults",
    "read_diagnostics",
    "read_field",
    "run",
    "scenario_presets",
    "u_from_w",
    "verify_entropy_step",
    "w_from_u",
    "weights_for",
    "write_diagnostics",
    "write_field",
]

__version__ = "0.1.0"
