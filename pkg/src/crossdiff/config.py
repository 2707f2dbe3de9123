"""Scenario configuration files.

The on-disk format is TOML with sections [coefficients], [grid], [scheme],
[initial], and [output].  A file may instead name a shipped preset, in which
case only a label and an [output] section can accompany it; everything else
comes from the preset.  Parsing is strict: unknown sections or keys are
errors, and every error message names the offending key.
"""

import dataclasses

import tomli

import numpy as np

from crossdiff.coefficients import CoefficientSet
from crossdiff.entropy import RegularizationParams
from crossdiff.presets import (
    InitialSpec,
    OutputSpec,
    ScenarioConfig,
    scenario_presets,
    weights_for,
)
from crossdiff.grid import Grid
from crossdiff.stepper import EntropyCheckConfig, NewtonConfig, SchemeConfig


class ConfigError(ValueError):
    """A configuration document violates the schema."""


_SECTIONS = ("coefficients", "grid", "scheme", "initial", "output")

_SCHEME_KEYS = {
    "eps": float,
    "delta": float,
    "tau": float,
    "t_end": float,
    "mode": str,
    "eta": float,
    "newton_tol": float,
    "newton_max_iters": int,
    "entropy_check": bool,
    "entropy_slack": float,
}


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"[{where}] is missing required key '{key}'")
    return table[key]


def _number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {type(value).__name__}")
    return float(value)


def _vector(value, key: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"'{key}' must be a nonempty list of numbers")
    return np.array([_number(v, key) for v in value])


def _reject_unknown(table: dict, allowed, where: str):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{where}]" if where else f"unknown key '{key}'")


def _parse_coefficients(table: dict):
    _reject_unknown(table, ("a", "a0", "pi"), "coefficients")
    a_rows = _require(table, "a", "coefficients")
    if not isinstance(a_rows, list) or not all(isinstance(r, list) for r in a_rows):
        raise ConfigError("'coefficients.a' must be a list of equal-length rows")
    a = np.array([[_number(v, "coefficients.a") for v in row] for row in a_rows])
    a0 = _vector(_require(table, "a0", "coefficients"), "coefficients.a0")
    try:
        coeffs = CoefficientSet(a=a, a0=a0)
    except ValueError as exc:
        raise ConfigError(f"[coefficients] invalid: {exc}") from exc
    pi = table.get("pi")
    if pi is not None:
        pi = _vector(pi, "coefficients.pi")
        if pi.shape != (coeffs.n,):
            raise ConfigError(f"'coefficients.pi' must have {coeffs.n} entries")
    try:
        weights = weights_for(coeffs, pi=pi)
    except ValueError as exc:
        raise ConfigError(f"[coefficients] weights: {exc}") from exc
    return coeffs, weights


def _parse_grid(table: dict) -> Grid:
    _reject_unknown(table, ("cells", "lengths"), "grid")
    cells = _require(table, "cells", "grid")
    lengths = _require(table, "lengths", "grid")
    if not isinstance(cells, list) or not all(isinstance(c, int) for c in cells):
        raise ConfigError("'grid.cells' must be a list of integers")
    try:
        return Grid(cells=tuple(cells), lengths=tuple(_vector(lengths, "grid.lengths")))
    except ValueError as exc:
        raise ConfigError(f"[grid] invalid: {exc}") from exc


def _parse_scheme(table: dict):
    _reject_unknown(table, tuple(_SCHEME_KEYS), "scheme")
    for key, kind in _SCHEME_KEYS.items():
        if key in table and kind in (float, int):
            table[key] = _number(table[key], f"scheme.{key}")
            if kind is int:
                if table[key] != int(table[key]):
                    raise ConfigError(f"'scheme.{key}' must be an integer")
                table[key] = int(table[key])
    t_end = _require(table, "t_end", "scheme")
    mode = table.get("mode", "delta_eq_eps")
    if "entropy_check" in table and not isinstance(table["entropy_check"], bool):
        raise ConfigError("'scheme.entropy_check' must be a boolean")
    try:
        reg = RegularizationParams(
            eps=_require(table, "eps", "scheme"),
            delta=table.get("delta", 0.0),
            tau=_require(table, "tau", "scheme"),
            eta=table.get("eta", 0.0),
        )
        scheme = SchemeConfig(
            reg=reg,
            newton=NewtonConfig(
                tol=table.get("newton_tol", 1e-13),
                max_iters=table.get("newton_max_iters", 40),
            ),
            scheme_mode=mode,
            entropy_check=EntropyCheckConfig(
                enabled=table.get("entropy_check", True),
                slack=table.get("entropy_slack", 1e-8),
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"[scheme] invalid: {exc}") from exc
    return scheme, t_end


def _parse_initial(table: dict) -> InitialSpec:
    allowed = ("kind", "base", "amplitude", "center", "width", "seed", "floor")
    _reject_unknown(table, allowed, "initial")
    kind = _require(table, "kind", "initial")
    if not isinstance(kind, str):
        raise ConfigError("'initial.kind' must be a string")
    seed = table.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("'initial.seed' must be an integer")
    try:
        return InitialSpec(
            kind=kind,
            base=tuple(_vector(_require(table, "base", "initial"), "initial.base")),
            amplitude=tuple(_vector(table["amplitude"], "initial.amplitude"))
            if "amplitude" in table
            else (),
            center=tuple(_vector(table["center"], "initial.center")) if "center" in table else (),
            width=tuple(_vector(table["width"], "initial.width")) if "width" in table else (),
            seed=seed,
            floor=_number(table.get("floor", 1e-3), "initial.floor"),
        )
    except ValueError as exc:
        raise ConfigError(f"[initial] invalid: {exc}") from exc


def _parse_output(table: dict) -> OutputSpec:
    _reject_unknown(table, ("cadence", "diagnostics", "final_state"), "output")
    cadence = table.get("cadence", 10)
    if not isinstance(cadence, int) or isinstance(cadence, bool):
        raise ConfigError("'output.cadence' must be an integer")
    for key in ("diagnostics", "final_state"):
        if key in table and not isinstance(table[key], str):
            raise ConfigError(f"'output.{key}' must be a path string")
    try:
        return OutputSpec(
            cadence=cadence,
            diagnostics=table.get("diagnostics"),
            final_state=table.get("final_state"),
        )
    except ValueError as exc:
        raise ConfigError(f"[output] invalid: {exc}") from exc


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    """Build a scenario from a parsed TOML document."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a table")
    _reject_unknown(doc, ("label", "preset", "seed") + _SECTIONS, "")

    preset_name = doc.get("preset")
    if preset_name is not None:
        if not isinstance(preset_name, str):
            raise ConfigError("'preset' must be a string")
        presets = scenario_presets()
        if preset_name not in presets:
            raise ConfigError(
                f"unknown preset '{preset_name}', available: {', '.join(sorted(presets))}"
            )
        extra = [s for s in _SECTIONS if s in doc and s != "output"]
        if extra:
            raise ConfigError(
                f"preset '{preset_name}' cannot be combined with [{extra[0]}]; drop one"
            )
        scenario = presets[preset_name]
        if "label" in doc:
            if not isinstance(doc["label"], str) or not doc["label"]:
                raise ConfigError("'label' must be a nonempty string")
            scenario = dataclasses.replace(scenario, label=doc["label"])
        if "seed" in doc:
            if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
                raise ConfigError("'seed' must be an integer")
            scenario = dataclasses.replace(scenario, seed=doc["seed"])
        if "output" in doc:
            scenario = dataclasses.replace(scenario, output=_parse_output(doc["output"]))
        return scenario

    for section in ("coefficients", "grid", "scheme", "initial"):
        if section not in doc:
            raise ConfigError(f"missing required section [{section}]")
        if not isinstance(doc[section], dict):
            raise ConfigError(f"[{section}] must be a table")

    label = doc.get("label", "custom")
    if not isinstance(label, str) or not label:
        raise ConfigError("'label' must be a nonempty string")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("'seed' must be an integer")

    coeffs, weights = _parse_coefficients(dict(doc["coefficients"]))
    grid = _parse_grid(dict(doc["grid"]))
    scheme, t_end = _parse_scheme(dict(doc["scheme"]))
    initial = _parse_initial(dict(doc["initial"]))
    output = _parse_output(dict(doc.get("output", {})))
    try:
        return ScenarioConfig(
            label=label,
            coeffs=coeffs,
            weights=weights,
            grid=grid,
            scheme=scheme,
            initial=initial,
            t_end=t_end,
            output=output,
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    try:
        with open(path, "rb") as handle:
            doc = tomli.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path} is not valid TOML: {exc}") from exc
    return scenario_from_dict(doc)
