"""Grid fields (density, impulse, potential) and discrete operators.

Fields live on cell centers of a GridSpec.  Gradients are central
differences; the divergence used by the density update is the face-flux
form (face values by linear interpolation of the two neighboring centers),
which telescopes exactly and therefore conserves mass to rounding.

Boundary handling: periodic wraps; reflecting mirrors the field across the
wall (zero normal gradient) and carries zero flux through the wall faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import GridSpec


class GridMismatch(ValueError):
    """Operands live on different grids."""


class NegativeDensity(ValueError):
    """A density field has negative entries."""


def _check_same_grid(*grids: GridSpec) -> None:
    first = grids[0]
    for g in grids[1:]:
        if g.extent != first.extent or g.dx != first.dx:
            raise GridMismatch(f"grid {g.extent}/{g.dx} vs {first.extent}/{first.dx}")


def _shift(a: np.ndarray, axis: int, offset: int, boundary: str) -> np.ndarray:
    """a evaluated at index+offset along axis, per the boundary rule."""
    if boundary == "periodic":
        return np.roll(a, -offset, axis=axis)
    # reflecting: mirror across the wall
    out = np.empty_like(a)
    n = a.shape[axis]
    idx = np.arange(n) + offset
    idx = np.where(idx < 0, -idx - 1, idx)
    idx = np.where(idx >= n, 2 * n - 1 - idx, idx)
    sl = [slice(None)] * a.ndim
    np.take(a, idx, axis=axis, out=out)
    return out


def grad(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Central-difference gradient, shape (*grid.shape, dims)."""
    out = np.empty(values.shape + (grid.dims,))
    for u in range(grid.dims):
        plus = _shift(values, u, +1, grid.boundary)
        minus = _shift(values, u, -1, grid.boundary)
        out[..., u] = (plus - minus) / (2.0 * grid.dx)
    return out


def face_flux_divergence(vec: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Outward face-flux sum per cell divided by the cell volume.

    vec has shape (*grid.shape, dims).  Face values are the mean of the two
    adjacent cell centers; wall faces of a reflecting grid carry no flux.
    Summed against the cell volume this telescopes to zero exactly.
    """
    div = np.zeros(vec.shape[:-1])
    for u in range(grid.dims):
        comp = vec[..., u]
        plus = 0.5 * (comp + _shift(comp, u, +1, grid.boundary))
        minus = 0.5 * (comp + _shift(comp, u, -1, grid.boundary))
        if grid.boundary == "reflecting":
            first = [slice(None)] * comp.ndim
            last = [slice(None)] * comp.ndim
            first[u] = 0
            last[u] = comp.shape[u] - 1
            minus[tuple(first)] = 0.0
            plus[tuple(last)] = 0.0
        div += (plus - minus) / grid.dx
    return div


@dataclass
class DensityField:
    """Sample density per cell: rho = count / dx^dims (or normalized)."""

    rho: np.ndarray
    grid: GridSpec
    normalized: bool = False

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.float64)
        if self.rho.shape != self.grid.shape:
            raise GridMismatch(f"rho shape {self.rho.shape} vs grid {self.grid.shape}")

    def total(self) -> float:
        """Integral of rho over the domain (count, or 1 when normalized)."""
        return float(self.rho.sum() * self.grid.cell_volume)

    def normalize(self) -> "DensityField":
        tot = self.total()
        if tot <= 0:
            raise NegativeDensity("cannot normalize an empty density")
        return DensityField(self.rho / tot, self.grid, normalized=True)


@dataclass
class ImpulseField:
    """Impulse density per cell, shape (*grid.shape, dims); p = m rho v."""

    p: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.p.shape != self.grid.shape + (self.grid.dims,):
            raise GridMismatch(
                f"p shape {self.p.shape} vs grid {self.grid.shape + (self.grid.dims,)}")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ImpulseField":
        return cls(np.zeros(grid.shape + (grid.dims,)), grid)


@dataclass
class Potential:
    """External potential on the grid.

    ``v_pot`` is the physical potential energy; ``values`` is the internal
    scalar field consumed by the dynamics, values = scale * v_pot.  The
    gradient of each is recomputed from the stored arrays on access, so it
    can never go stale after an update.
    """

    v_pot: np.ndarray
    grid: GridSpec
    scale: float = 1.0
    _grad_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.v_pot = np.asarray(self.v_pot, dtype=np.float64)
        if self.v_pot.shape != self.grid.shape:
            raise GridMismatch(f"V shape {self.v_pot.shape} vs grid {self.grid.shape}")

    @classmethod
    def zeros(cls, grid: GridSpec, scale: float = 1.0) -> "Potential":
        return cls(np.zeros(grid.shape), grid, scale)

    @property
    def values(self) -> np.ndarray:
        """Internal field V = scale * v_pot."""
        return self.scale * self.v_pot

    @property
    def grad_v_pot(self) -> np.ndarray:
        if self._grad_cache is None:
            object.__setattr__(self, "_grad_cache", grad(self.v_pot, self.grid))
        return self._grad_cache

    @property
    def grad_values(self) -> np.ndarray:
        """Gradient of the internal field (V_x, V_y, V_z)."""
        return self.scale * self.grad_v_pot

    def with_v_pot(self, v_pot: np.ndarray) -> "Potential":
        return Potential(v_pot, self.grid, self.scale)
