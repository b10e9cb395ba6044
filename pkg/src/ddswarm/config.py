"""Physical configuration, grid geometry and grain-dependent coefficients.

All dynamics modules consume configs in internal units where the action
constant h and the particle mass M are both 1.  ``to_internal_units``
performs the rescaling and records the factors so outputs can be converted
back.  The grain-dependent coefficients are never stored by hand anywhere:
``DerivedCoefficients.from_config`` is the single source and is a pure
function of (PhysicalConfig, GridSpec).

Coefficient conventions, in internal units (h = M = 1, sample mass m = M/n):

    I      = h^2 / (2 m^2 dx^3)        diffusive impulse-flux intensity
    kappa  = h / (m dx)                potential-coupling intensity
    gamma  = (h / 2M) / dx^2           two-cell coupling rate
    alpha  = -3 h^2 / (m dx^2)         potential shift (kept literally as
                                       published; the sign/mass choice is
                                       gauge-irrelevant for densities)
    g      = 1                         inertia coefficient (unit choice)

The scalar field V consumed by the particle and continuum layers is
proportional to the physical potential energy V_pot:

    V = potential_scale * V_pot,   potential_scale = m^2 dx / (h M)

chosen so that kappa * rho * grad V equals (m/M) * rho * grad V_pot, i.e.
each sample feels the per-sample share of the physical force.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

CONFIG_KEYS = (
    "h", "mass", "charge", "c", "n_samples", "dx", "dt",
    "extent_x", "extent_y", "extent_z", "dims", "boundary", "seed",
)


class NonPositiveScale(ValueError):
    """A scale parameter (dx, dt, c, M, n, ...) is zero or negative."""


class ScaleSeparationViolated(ValueError):
    """c*dt exceeds dx/10, breaking the advection-per-step bound."""


class RelativisticRegimeWarning(UserWarning):
    """Expected moving fraction too large for the resting-majority closure."""


@dataclass(frozen=True)
class PhysicalConfig:
    """Particle constants and swarm size (user or internal units)."""

    h: float = 1.0          # action constant
    mass: float = 1.0       # particle mass M
    charge: float = 0.0     # particle charge Q
    c: float = 1.0          # single nonzero sample speed
    n_samples: int = 100000
    dims: int = 1

    @property
    def sample_mass(self) -> float:
        return self.mass / self.n_samples

    @property
    def sample_charge(self) -> float:
        return self.charge / self.n_samples

    def check(self) -> None:
        if self.n_samples < 1:
            raise NonPositiveScale(f"n_samples must be >= 1, got {self.n_samples}")
        for name in ("h", "mass", "c"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise NonPositiveScale(f"{name} must be positive and finite, got {v}")
        if self.dims not in (1, 2, 3):
            raise ValueError(f"dims must be 1, 2 or 3, got {self.dims}")


@dataclass(frozen=True)
class GridSpec:
    """Uniform cubic grid: grain dx, step dt, per-axis cell counts."""

    dx: float
    dt: float
    extent: tuple[int, ...]
    boundary: str = "periodic"  # periodic | reflecting

    @property
    def dims(self) -> int:
        return len(self.extent)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.extent

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.extent))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(e * self.dx for e in self.extent)

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dims

    def axis_coords(self, u: int) -> np.ndarray:
        """Cell-center coordinates along axis u."""
        return (np.arange(self.extent[u]) + 0.5) * self.dx

    def check(self) -> None:
        if self.dx <= 0:
            raise NonPositiveScale(f"dx must be positive, got {self.dx}")
        if self.dt <= 0:
            raise NonPositiveScale(f"dt must be positive, got {self.dt}")
        if any(e < 2 for e in self.extent):
            raise ValueError(f"extent components must be >= 2, got {self.extent}")
        if self.boundary not in ("periodic", "reflecting"):
            raise ValueError(f"unknown boundary {self.boundary!r}")


@dataclass(frozen=True)
class DerivedCoefficients:
    """Grain-dependent intensities; always built via from_config."""

    I: float
    kappa: float
    gamma: float
    alpha: float
    potential_scale: float
    g: float = 1.0

    @classmethod
    def from_config(cls, phys: PhysicalConfig, grid: GridSpec) -> "DerivedCoefficients":
        h, M, dx = phys.h, phys.mass, grid.dx
        m = phys.sample_mass
        return cls(
            I=h * h / (2.0 * m * m * dx**3),
            kappa=h / (m * dx),
            gamma=(h / (2.0 * M)) / dx**2,
            alpha=-3.0 * h * h / (m * dx**2),
            potential_scale=m * m * dx / (h * M),
        )


@dataclass(frozen=True)
class UnitScales:
    """Multiply an internal value by the factor to recover user units."""

    length: float = 1.0
    time: float = 1.0
    mass: float = 1.0
    charge: float = 1.0

    @property
    def action(self) -> float:
        return self.mass * self.length**2 / self.time

    @property
    def energy(self) -> float:
        return self.mass * self.length**2 / self.time**2


@dataclass(frozen=True)
class ValidatedConfig:
    """Internal-unit config bundle shared by every layer of a run."""

    physical: PhysicalConfig
    grid: GridSpec
    coeffs: DerivedCoefficients
    scales: UnitScales
    seed: int = 0

    @property
    def dims(self) -> int:
        return self.physical.dims


def to_internal_units(phys: PhysicalConfig, grid: GridSpec,
                      ) -> tuple[PhysicalConfig, GridSpec, UnitScales]:
    """Rescale so h = 1 and M = 1; lengths are kept as given.

    The remaining freedom is fixed by leaving the length unit alone, which
    makes the time unit tau = M * L^2 / h.  Returns the rescaled pair plus
    the factors that convert internal values back to user units.
    """
    mass_scale = phys.mass
    time_scale = phys.mass / phys.h  # = M * length^2 / h with length = 1
    scales = UnitScales(length=1.0, time=time_scale, mass=mass_scale, charge=1.0)
    phys_i = replace(
        phys,
        h=1.0,
        mass=1.0,
        c=phys.c * time_scale,  # length unchanged, so speeds scale by tau
    )
    grid_i = replace(grid, dt=grid.dt / time_scale)
    return phys_i, grid_i, scales


def from_internal_units(phys: PhysicalConfig, grid: GridSpec, scales: UnitScales,
                        ) -> tuple[PhysicalConfig, GridSpec]:
    """Inverse of to_internal_units."""
    phys_u = replace(
        phys,
        h=phys.h * scales.action,
        mass=phys.mass * scales.mass,
        charge=phys.charge * scales.charge,
        c=phys.c * scales.length / scales.time,
    )
    grid_u = replace(grid, dx=grid.dx * scales.length, dt=grid.dt * scales.time)
    return phys_u, grid_u


def expected_moving_fraction(phys: PhysicalConfig, grid: GridSpec,
                             target_intensity: float | None = None) -> float:
    """Total moving fraction implied by an impulse-flux intensity target.

    The per-axis moving fraction beta satisfies c^2 beta = I/m (see
    swarm.calibrate_diffusion); the total fraction is dims * beta.  With no
    explicit target this uses the grain-law intensity, which at practical
    swarm sizes lands deep in the relativistic regime -- that is exactly
    what the warning in validate() is for.
    """
    coeffs = DerivedCoefficients.from_config(phys, grid)
    target = coeffs.I if target_intensity is None else target_intensity
    beta = target / (phys.sample_mass * phys.c**2)
    return phys.dims * beta


def validate(phys: PhysicalConfig, grid: GridSpec, seed: int = 0,
             target_intensity: float | None = None) -> ValidatedConfig:
    """Check invariants, convert to internal units, derive coefficients."""
    phys.check()
    grid.check()
    if grid.dims != phys.dims:
        raise ValueError(f"grid extent has {grid.dims} axes but dims={phys.dims}")
    if phys.c * grid.dt > grid.dx / 10.0 * (1.0 + 1e-12):
        raise ScaleSeparationViolated(
            f"c*dt = {phys.c * grid.dt:g} exceeds dx/10 = {grid.dx / 10.0:g}")
    phys_i, grid_i, scales = to_internal_units(phys, grid)
    target_i = None
    if target_intensity is not None:
        # intensity has units of action^2 / (mass^2 length^3): rescale
        target_i = target_intensity / (scales.action**2 / (scales.mass**2 * scales.length**3))
    frac = expected_moving_fraction(phys_i, grid_i, target_i)
    if frac > 0.2:
        warnings.warn(
            f"expected moving fraction {frac:.3g} exceeds 0.2; "
            "the resting-majority approximation degrades",
            RelativisticRegimeWarning, stacklevel=2)
    coeffs = DerivedCoefficients.from_config(phys_i, grid_i)
    return ValidatedConfig(physical=phys_i, grid=grid_i, coeffs=coeffs,
                           scales=scales, seed=int(seed))


def parse_config_text(text: str) -> dict:
    """Parse the flat `key = value` format with # comments."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    return raw


def load_config(path) -> ValidatedConfig:
    """Read a config file and return the validated internal-unit bundle."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_config_text(fh.read())

    def fget(key, default):
        return float(raw[key]) if key in raw else default

    def iget(key, default):
        return int(float(raw[key])) if key in raw else default

    dims = iget("dims", 1)
    phys = PhysicalConfig(
        h=fget("h", 1.0),
        mass=fget("mass", 1.0),
        charge=fget("charge", 0.0),
        c=fget("c", 1.0),
        n_samples=iget("n_samples", 100000),
        dims=dims,
    )
    extent_keys = ("extent_x", "extent_y", "extent_z")[:dims]
    extent = tuple(iget(k, 0) for k in extent_keys)
    if any(e <= 0 for e in extent):
        raise ValueError(f"extent keys {extent_keys} must all be set and positive")
    grid = GridSpec(
        dx=fget("dx", 0.0),
        dt=fget("dt", 0.0),
        extent=extent,
        boundary=raw.get("boundary", "periodic"),
    )
    return validate(phys, grid, seed=iget("seed", 0))
