"""Deterministic field layer: the (rho, p) pair and its update laws.

The state is the density rho and the impulse density p = m rho v.  The
impulse responds to the density gradient and to the external field,

    dp/dt = -I grad rho - kappa rho grad V,

and the density responds to the impulse through the face flux of p/m
(outward flux decreases the cell density).  The inertia channel g rho p
is dropped by default in the resting-majority regime; pass
``include_inertia=True`` to keep it for experiments.

The second time derivative of rho is, by construction, the exact
composition of the two operators, so the identity d2rho == drho(dpdt)
holds bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DerivedCoefficients, GridSpec, PhysicalConfig
from .fields import (DensityField, GridMismatch, ImpulseField, Potential,
                     face_flux_divergence, grad)


class UnstableStep(RuntimeError):
    """Field integration blew up (non-finite values or mass runaway)."""


def dpdt(rho: DensityField, potential: Potential, coeffs: DerivedCoefficients,
         p: ImpulseField | None = None, include_inertia: bool = False) -> ImpulseField:
    """Impulse-density rate: -I grad rho - kappa rho grad V (+ g rho p)."""
    grid = rho.grid
    if potential.grid.extent != grid.extent or potential.grid.dx != grid.dx:
        raise GridMismatch("potential grid differs from density grid")
    rate = -coeffs.I * grad(rho.rho, grid)
    rate -= coeffs.kappa * rho.rho[..., None] * potential.grad_values
    if include_inertia:
        if p is None:
            raise ValueError("inertia term requested but no impulse field given")
        rate += coeffs.g * rho.rho[..., None] * p.p
    return ImpulseField(rate, grid)


def drho_dt(p: ImpulseField, grid: GridSpec, phys: PhysicalConfig) -> np.ndarray:
    """Density rate from the face flux of p: outward flux drains the cell.

    The face value of p is the mean of the two neighboring centers; the
    flux is divided by the sample mass (p/m is the count flux) and by the
    cell volume, so summed against dx^dims the result telescopes to zero.
    """
    if p.grid.extent != grid.extent:
        raise GridMismatch("impulse field grid differs")
    return -face_flux_divergence(p.p, grid) / phys.sample_mass


def d2rho_dt2(rho: DensityField, potential: Potential, coeffs: DerivedCoefficients,
              phys: PhysicalConfig) -> np.ndarray:
    """Second density rate: exactly drho_dt applied to the dpdt output."""
    return drho_dt(dpdt(rho, potential, coeffs), rho.grid, phys)


def wave_speed(coeffs: DerivedCoefficients, phys: PhysicalConfig) -> float:
    """Signal speed of the linearized pair system: sqrt(I / m)."""
    return float(np.sqrt(coeffs.I / phys.sample_mass))


def stable_dt(grid: GridSpec, coeffs: DerivedCoefficients, phys: PhysicalConfig,
              safety: float = 0.25) -> float:
    """CFL-style step bound for the explicit update."""
    return safety * grid.dx / wave_speed(coeffs, phys)


@dataclass
class ContinuumTrajectory:
    times: np.ndarray
    rho: np.ndarray        # (frames, *grid.shape)
    p: np.ndarray          # (frames, *grid.shape, dims)
    grid: GridSpec

    def frame(self, k: int) -> tuple[DensityField, ImpulseField]:
        return (DensityField(self.rho[k], self.grid),
                ImpulseField(self.p[k], self.grid))


def integrate_continuum(rho0: DensityField, p0: ImpulseField, potential: Potential,
                        coeffs: DerivedCoefficients, phys: PhysicalConfig,
                        t_end: float, dt: float | None = None,
                        frame_interval: float | None = None,
                        potential_refresh=None,
                        include_inertia: bool = False) -> ContinuumTrajectory:
    """Explicit time integration of the coupled (rho, p) pair.

    The impulse is updated first and the density then consumes the fresh
    impulse (the flux form keeps the total mass exact either way).  dt
    defaults to the CFL-style bound; pass one explicitly to override.
    potential_refresh(potential, t) -> Potential is invoked once per step
    when given, mirroring the particle engine's refresh hook.
    """
    grid = rho0.grid
    if p0.grid.extent != grid.extent:
        raise GridMismatch("p0 grid differs from rho0 grid")
    if dt is None:
        dt = min(stable_dt(grid, coeffs, phys), grid.dt)
    n_steps = max(1, int(round(t_end / dt)))
    every = max(1, int(round((frame_interval or t_end) / dt)))

    rho = rho0.rho.copy()
    p = p0.p.copy()
    mass0 = rho.sum() * grid.cell_volume
    frames_t, frames_rho, frames_p = [0.0], [rho.copy()], [p.copy()]
    pot = potential
    for k in range(n_steps):
        t = k * dt
        if potential_refresh is not None:
            pot = potential_refresh(pot, t)
        rate_p = dpdt(DensityField(rho, grid), pot, coeffs,
                      p=ImpulseField(p, grid) if include_inertia else None,
                      include_inertia=include_inertia)
        p = p + dt * rate_p.p
        rho = rho + dt * drho_dt(ImpulseField(p, grid), grid, phys)
        if (k + 1) % every == 0 or k == n_steps - 1:
            if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(p))):
                raise UnstableStep(f"non-finite fields at step {k + 1}")
            mass = rho.sum() * grid.cell_volume
            if abs(mass - mass0) > 1e-6 * max(abs(mass0), 1.0):
                raise UnstableStep(f"mass drifted to {mass} from {mass0}")
            frames_t.append((k + 1) * dt)
            frames_rho.append(rho.copy())
            frames_p.append(p.copy())
    return ContinuumTrajectory(np.array(frames_t), np.array(frames_rho),
                               np.array(frames_p), grid)
