"""Cell-centered uniform grids and the discrete operators on them.

Everything is finite-volume with two-point face differences.  Boundary
faces carry no flux at all (they are simply omitted), which encodes the
no-flux condition and makes per-species mass conservation a telescoping
identity rather than an approximation.  Grids are uniform boxes in one or
two dimensions; the interval/rectangle stands in for a general smooth
domain, which costs nothing at the level of the scheme.

Per-face quadrature weights equal the cell volume: a face integral in the
two-point setting is (difference/h)^2 * (h * face area), and h times the
face area is exactly one cell volume on a uniform grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from crossdiff.coefficients import CoefficientSet, EntropyWeights
from crossdiff.entropy import diffusion_Aeps


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered box: ``cells`` and ``lengths`` per axis (1D or 2D)."""

    cells: tuple
    lengths: tuple

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        lengths = tuple(float(l) for l in np.atleast_1d(self.lengths))
        if len(cells) not in (1, 2) or len(lengths) != len(cells):
            raise ValueError("grids are 1D or 2D with one length per axis")
        if any(c < 2 for c in cells):
            raise ValueError("need at least 2 cells per axis")
        if any(not (l > 0.0 and math.isfinite(l)) for l in lengths):
            raise ValueError("lengths must be positive and finite")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> tuple:
        return tuple(l / c for l, c in zip(self.lengths, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def total_cells(self) -> int:
        return int(np.prod(self.cells))

    def centers(self) -> tuple:
        """Cell-center coordinates, one 1D array per axis."""
        return tuple(
            (np.arange(c) + 0.5) * (l / c) for c, l in zip(self.cells, self.lengths)
        )


@dataclass(frozen=True)
class SpeciesField:
    """Cell-averaged densities, one row per species: values shape (n, *cells)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[1:] != self.grid.cells:
            raise ValueError(
                f"values of shape {values.shape} do not match grid cells {self.grid.cells}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if np.any(values < 0.0):
            raise ValueError("field values must be nonnegative")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def mass(self) -> np.ndarray:
        """Per-species mass, sum of values times cell volume."""
        spatial = tuple(range(1, self.values.ndim))
        return self.values.sum(axis=spatial) * self.grid.cell_volume

    def means(self) -> np.ndarray:
        return self.mass() / self.grid.measure


def face_gradient(grid: Grid, values: np.ndarray) -> tuple:
    """Two-point interior-face differences over h, one array per axis.

    Boundary faces are omitted: their gradient is zero by the no-flux
    closure, so they never appear in sums.  The spatial axes are the
    trailing ones, so species batches pass through unchanged.
    """
    values = np.asarray(values, dtype=float)
    lead = values.ndim - grid.dim
    return tuple(
        np.diff(values, axis=lead + ax) / grid.h[ax] for ax in range(grid.dim)
    )


def _face_means(grid: Grid, values: np.ndarray, ax: int) -> np.ndarray:
    lead = values.ndim - grid.dim
    axis = lead + ax
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (values[tuple(lo)] + values[tuple(hi)])


def _face_difference(grid: Grid, fluxes: np.ndarray, ax: int, lead: int) -> np.ndarray:
    """Net outflow per cell from interior-face fluxes along one axis, over h."""
    axis = lead + ax
    pad = [(0, 0)] * fluxes.ndim
    pad[axis] = (1, 1)
    padded = np.pad(fluxes, pad)  # zero boundary fluxes
    return np.diff(padded, axis=axis) / grid.h[ax]


def _flux_divergence_values(
    grid: Grid, u: np.ndarray, coeffs: CoefficientSet, weights: EntropyWeights, eps: float
) -> np.ndarray:
    """Unvalidated core of :func:`flux_divergence` on a raw (n, *cells) array."""
    grads = face_gradient(grid, u)
    rates = np.zeros_like(u)
    for ax in range(grid.dim):
        a_face = diffusion_Aeps(_face_means(grid, u, ax), coeffs, weights, eps)
        flux = np.einsum("ij...,j...->i...", a_face, grads[ax])
        rates += _face_difference(grid, flux, ax, lead=1)
    return rates


def flux_divergence(
    field: SpeciesField, coeffs: CoefficientSet, weights: EntropyWeights, eps: float
) -> np.ndarray:
    """Discrete div(sum_j A_eps,ij(u) grad u_j) per species and cell.

    Face coefficients use the arithmetic mean of the two adjacent cells;
    boundary faces contribute nothing.  Summing rate * cell volume over
    cells telescopes to zero per species.
    """
    if np.any(field.values <= 0.0):
        raise ValueError("flux divergence needs strictly positive densities")
    return _flux_divergence_values(field.grid, field.values, coeffs, weights, eps)


def neg_laplacian(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Negative discrete Laplacian with the same no-flux closure as the fluxes."""
    out = np.zeros_like(np.asarray(values, dtype=float))
    lead = out.ndim - grid.dim
    for ax, g in enumerate(face_gradient(grid, values)):
        out -= _face_difference(grid, g, ax, lead=lead)
    return out


def neumann_poisson_solve(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Solve -Lap psi = rhs, no-flux, with zero-mean rhs and zero-mean psi.

    The no-flux two-point Laplacian on a uniform box diagonalizes exactly in
    the type-II cosine basis, with per-axis eigenvalues
    (2 - 2 cos(pi k / N)) / h^2, so the solve is a forward transform, a
    division skipping the constant mode, and an inverse transform.  Zeroing
    that mode is what pins the mean of psi to zero.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != grid.cells:
        raise ValueError(f"rhs of shape {rhs.shape} does not match grid {grid.cells}")
    scale = math.sqrt(float((rhs**2).sum()) * grid.cell_volume)
    if abs(float(rhs.sum()) * grid.cell_volume) > 1e-10 * max(scale, 1e-300):
        raise ValueError("rhs must have zero mean")
    if scale == 0.0:
        return np.zeros_like(rhs)

    coef = dctn(rhs, type=2, norm="ortho")
    lam = np.zeros(grid.cells)
    for ax, (c, h) in enumerate(zip(grid.cells, grid.h)):
        shape = [1] * grid.dim
        shape[ax] = c
        k = np.arange(c).reshape(shape)
        lam = lam + (2.0 - 2.0 * np.cos(np.pi * k / c)) / h**2
    flat = lam.reshape(-1)
    flat[0] = 1.0  # constant mode, coefficient forced to zero below
    coef = coef / lam
    coef.reshape(-1)[0] = 0.0
    return idctn(coef, type=2, norm="ortho")


@dataclass(frozen=True)
class FieldNorms:
    """Per-species discrete L1, L2, L3 norms."""

    l1: np.ndarray
    l2: np.ndarray
    l3: np.ndarray


def discrete_norms(field: SpeciesField) -> FieldNorms:
    """Cell-sum quadrature norms per species."""
    vol = field.grid.cell_volume
    absu = np.abs(field.values)
    spatial = tuple(range(1, field.values.ndim))
    return FieldNorms(
        l1=absu.sum(axis=spatial) * vol,
        l2=np.sqrt((absu**2).sum(axis=spatial) * vol),
        l3=((absu**3).sum(axis=spatial) * vol) ** (1.0 / 3.0),
    )


def fisher(field: SpeciesField) -> np.ndarray:
    """Per-species sum over faces of |grad sqrt(u)|^2 times the face weight."""
    root = np.sqrt(field.values)
    vol = field.grid.cell_volume
    out = np.zeros(field.n)
    for g in face_gradient(field.grid, root):
        spatial = tuple(range(1, g.ndim))
        out += (g**2).sum(axis=spatial) * vol
    return out
