"""Finite-difference wave-equation reference layer.

Two pieces live here:

* A norm-preserving Crank-Nicolson propagator for
      i h dPsi/dt = -(h^2/2M) Lap Psi + V_pot Psi
  on the shared grid, used as ground truth for the particle and continuum
  layers.  Static potentials in 1-D/2-D get the full CN operator (one
  sparse LU, reused every step); 3-D and time-dependent potentials use a
  Strang split with exact pointwise potential phases and per-axis CN
  sweeps.  Both variants are unitary up to solver precision.

* The exact two-cell reduction: the coupled ODEs for the real/imaginary
  parts in two adjacent cells, the closed forms of the first and second
  time derivative of the cell density, and the side-by-side comparison
  against the continuum face-flux operator restricted to the same pair.

A leapfrog-style explicit update of the real/imaginary parts is included
as a secondary integrator for fidelity experiments; the reference results
always come from Crank-Nicolson.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .config import DerivedCoefficients, GridSpec, PhysicalConfig, ValidatedConfig
from .fields import DensityField, GridMismatch, Potential


class LinearSolveFailed(RuntimeError):
    pass


class NormDrift(RuntimeError):
    """Propagator norm left the 1e-9 band; indicates an internal error."""


@dataclass
class WaveField:
    """Real/imaginary wave-function parts on the grid."""

    psi_r: np.ndarray
    psi_i: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        self.psi_r = np.asarray(self.psi_r, dtype=np.float64)
        self.psi_i = np.asarray(self.psi_i, dtype=np.float64)
        if self.psi_r.shape != self.grid.shape or self.psi_i.shape != self.grid.shape:
            raise GridMismatch("wave parts do not match the grid")

    @classmethod
    def from_complex(cls, psi: np.ndarray, grid: GridSpec) -> "WaveField":
        psi = np.asarray(psi)
        return cls(psi.real.copy(), psi.imag.copy(), grid)

    def to_complex(self) -> np.ndarray:
        return self.psi_r + 1j * self.psi_i

    def norm(self) -> float:
        return float((self.psi_r**2 + self.psi_i**2).sum() * self.grid.cell_volume)

    def density(self) -> DensityField:
        return DensityField(self.psi_r**2 + self.psi_i**2, self.grid, normalized=True)

    def normalized(self) -> "WaveField":
        s = np.sqrt(self.norm())
        return WaveField(self.psi_r / s, self.psi_i / s, self.grid)


def laplacian_1d(n: int, dx: float, boundary: str) -> sp.csr_matrix:
    """Three-point Laplacian; periodic wraps, reflecting walls are Dirichlet."""
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    mat = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if boundary == "periodic":
        mat[0, n - 1] = 1.0
        mat[n - 1, 0] = 1.0
    return (mat / dx**2).tocsr()


def build_hamiltonian(grid: GridSpec, v_pot: np.ndarray, phys: PhysicalConfig) -> sp.csr_matrix:
    """Phase-rate Hamiltonian H with i dPsi/dt = H Psi, H in 1/time units."""
    kin = None
    eyes = [sp.identity(e, format="csr") for e in grid.extent]
    for u in range(grid.dims):
        lap_u = laplacian_1d(grid.extent[u], grid.dx, grid.boundary)
        term = None
        for v in range(grid.dims):
            block = lap_u if v == u else eyes[v]
            term = block if term is None else sp.kron(term, block, format="csr")
        kin = term if kin is None else kin + term
    H = (-phys.h / (2.0 * phys.mass)) * kin
    H = H + sp.diags(np.asarray(v_pot, dtype=np.float64).ravel() / phys.h)
    return H.tocsr()


class SchrodingerSolver:
    """Crank-Nicolson propagator on the shared grid.

    method: 'cn' full-operator CN (static V), 'split' Strang split with
    per-axis sweeps (required for time-dependent V), 'auto' picks 'cn'
    for dims <= 2 and 'split' for 3-D.
    """

    def __init__(self, grid: GridSpec, v_pot: np.ndarray, phys: PhysicalConfig,
                 dt: float | None = None, method: str = "auto"):
        self.grid = grid
        self.phys = phys
        self.dt = grid.dt if dt is None else float(dt)
        if method == "auto":
            method = "cn" if grid.dims <= 2 else "split"
        self.method = method
        self.v_pot = np.asarray(v_pot, dtype=np.float64)
        self._axis_lu = None
        self._axis_b = None
        self._lu = None
        self._b_mat = None
        self._build()

    def _build(self):
        try:
            if self.method == "cn":
                H = build_hamiltonian(self.grid, self.v_pot, self.phys)
                eye = sp.identity(H.shape[0], format="csr")
                a_mat = (eye + 0.5j * self.dt * H).tocsc()
                self._b_mat = (eye - 0.5j * self.dt * H).tocsr()
                self._lu = splu(a_mat)
            elif self.method == "split":
                self._axis_lu, self._axis_b = [], []
                for u in range(self.grid.dims):
                    n = self.grid.extent[u]
                    t_u = (-self.phys.h / (2.0 * self.phys.mass)) * laplacian_1d(
                        n, self.grid.dx, self.grid.boundary)
                    eye = sp.identity(n, format="csr")
                    self._axis_lu.append(splu((eye + 0.5j * self.dt * t_u).tocsc()))
                    self._axis_b.append((eye - 0.5j * self.dt * t_u).tocsr())
            else:
                raise ValueError(f"unknown method {self.method!r}")
        except ValueError:
            raise
        except Exception as exc:  # factorization failures surface here
            raise LinearSolveFailed(str(exc)) from exc

    def set_potential(self, v_pot: np.ndarray) -> None:
        """Swap the potential; 'cn' refactors, 'split' is refactor-free."""
        self.v_pot = np.asarray(v_pot, dtype=np.float64)
        if self.method == "cn":
            self._build()

    def step(self, psi: np.ndarray) -> np.ndarray:
        """Advance a complex wave array by one dt (returns a new array)."""
        if self.method == "cn":
            flat = psi.ravel()
            out = self._lu.solve(self._b_mat @ flat)
            return out.reshape(psi.shape)
        # Strang split: half potential, axis sweeps, half potential
        phase = np.exp(-0.5j * self.dt * self.v_pot / self.phys.h)
        out = psi * phase
        for u in range(self.grid.dims):
            moved = np.moveaxis(out, u, 0)
            flat = moved.reshape(moved.shape[0], -1)
            flat = self._axis_lu[u].solve(self._axis_b[u] @ flat)
            out = np.moveaxis(flat.reshape(moved.shape), 0, u)
        return out * phase

    def evolve(self, field: WaveField, n_steps: int, check_every: int = 16) -> WaveField:
        """Step a WaveField, policing norm drift (raises NormDrift > 1e-9)."""
        psi = field.to_complex()
        ref = float((np.abs(psi) ** 2).sum() * self.grid.cell_volume)
        for k in range(n_steps):
            psi = self.step(psi)
            if (k + 1) % check_every == 0 or k == n_steps - 1:
                norm = float((np.abs(psi) ** 2).sum() * self.grid.cell_volume)
                if abs(norm - ref) > 1e-9 * max(ref, 1.0):
                    raise NormDrift(f"norm drifted to {norm} from {ref}")
        return WaveField.from_complex(psi, self.grid)


def schrodinger_step(psi: WaveField, potential: Potential, cfg: ValidatedConfig,
                     method: str = "auto") -> WaveField:
    """One-shot functional step; long runs should reuse a SchrodingerSolver."""
    solver = SchrodingerSolver(cfg.grid, potential.v_pot, cfg.physical, method=method)
    return WaveField.from_complex(solver.step(psi.to_complex()), cfg.grid)


def explicit_split_step(field: WaveField, potential: Potential, cfg: ValidatedConfig,
                        n_steps: int = 1) -> WaveField:
    """Secondary integrator: sequential explicit update of the split parts.

    This is the forward-difference reading of the split real/imaginary
    system (update Psi_r from Psi_i, then Psi_i from the new Psi_r).  It is
    conditionally stable and less accurate than Crank-Nicolson; kept for
    fidelity experiments only.
    """
    H = build_hamiltonian(cfg.grid, potential.v_pot, cfg.physical)
    dt = cfg.grid.dt
    pr = field.psi_r.ravel().copy()
    pi = field.psi_i.ravel().copy()
    for _ in range(n_steps):
        pr += dt * (H @ pi)
        pi -= dt * (H @ pr)
    shape = cfg.grid.shape
    return WaveField(pr.reshape(shape), pi.reshape(shape), cfg.grid)


def shifted_potential(potential: Potential, coeffs: DerivedCoefficients) -> Potential:
    """V_pot + alpha; a constant offset used by the two-cell analysis path.

    The density evolution is blind to the shift, so the reference solver
    never consumes this.
    """
    return Potential(potential.v_pot + coeffs.alpha, potential.grid, potential.scale)


def gaussian_packet(x: np.ndarray, sigma0: float, center: float, k0: float = 0.0,
                    ) -> np.ndarray:
    """Minimum-uncertainty 1-D packet with density variance sigma0^2."""
    envelope = np.exp(-((x - center) ** 2) / (4.0 * sigma0**2))
    psi = envelope * np.exp(1j * k0 * x)
    return psi


def free_packet_sigma2(t: float, sigma0: float, h: float = 1.0, mass: float = 1.0) -> float:
    """Density variance of a free packet: sigma0^2 (1 + (h t / 2 M sigma0^2)^2)."""
    return sigma0**2 * (1.0 + (h * t / (2.0 * mass * sigma0**2)) ** 2)


def harmonic_ground_sigma2(omega: float, h: float = 1.0, mass: float = 1.0) -> float:
    """Density variance of the oscillator ground state: h / (2 M omega)."""
    return h / (2.0 * mass * omega)


def discrete_ground_state(grid: GridSpec, v_pot: np.ndarray, phys: PhysicalConfig,
                          ) -> WaveField:
    """Lowest eigenvector of the discrete Hamiltonian, normalized on the grid.

    Using the discrete eigenstate (rather than sampling the analytic one)
    makes stationarity checks limited by the propagator, not by the
    stencil's O(dx^2) eigenfunction error.
    """
    H = build_hamiltonian(grid, v_pot, phys)
    # H is real symmetric here; eigsh wants that explicitly
    Hr = sp.csr_matrix(H.real)
    if Hr.shape[0] <= 512:
        from scipy.linalg import eigh

        w, v = eigh(Hr.toarray())
        vec = v[:, int(np.argmin(w))]
    else:
        from scipy.sparse.linalg import eigsh

        w, v = eigsh(Hr, k=1, which="SA")
        vec = v[:, 0]
    vec = vec * np.sign(vec.sum() if vec.sum() != 0 else 1.0)
    vec = vec / np.sqrt((vec**2).sum() * grid.cell_volume)
    return WaveField(vec.reshape(grid.shape), np.zeros(grid.shape), grid)


# ---------------------------------------------------------------------------
# Two-cell reduction
# ---------------------------------------------------------------------------

@dataclass
class TwoCellState:
    """Wave parts in two adjacent cells plus on-site rates.

    V_x and V_x1 are phase rates (physical potential over h, including any
    stencil shift); gamma is the neighbor coupling rate.
    """

    psi_r_x: float
    psi_i_x: float
    psi_r_x1: float
    psi_i_x1: float
    V_x: float
    V_x1: float
    gamma: float

    @property
    def rho_x(self) -> float:
        return self.psi_r_x**2 + self.psi_i_x**2

    @property
    def rho_x1(self) -> float:
        return self.psi_r_x1**2 + self.psi_i_x1**2

    def vector(self) -> np.ndarray:
        return np.array([self.psi_r_x, self.psi_i_x, self.psi_r_x1, self.psi_i_x1])

    def with_vector(self, vec: np.ndarray) -> "TwoCellState":
        return TwoCellState(vec[0], vec[1], vec[2], vec[3],
                            self.V_x, self.V_x1, self.gamma)


def two_cell_rhs(state: TwoCellState) -> np.ndarray:
    """Time derivatives (dPsi_r(x), dPsi_i(x), dPsi_r(x1), dPsi_i(x1))."""
    g = state.gamma
    return np.array([
        -g * state.psi_i_x1 + state.V_x * state.psi_i_x,
        g * state.psi_r_x1 - state.V_x * state.psi_r_x,
        -g * state.psi_i_x + state.V_x1 * state.psi_i_x1,
        g * state.psi_r_x - state.V_x1 * state.psi_r_x1,
    ])


def two_cell_drho_dt(state: TwoCellState) -> tuple[float, float]:
    """Closed-form (d rho(x)/dt, d rho(x1)/dt); exactly antisymmetric."""
    flux = 2.0 * state.gamma * (
        state.psi_i_x * state.psi_r_x1 - state.psi_r_x * state.psi_i_x1)
    return flux, -flux


@dataclass
class TwoCellSecondDerivative:
    """d^2 rho(x)/dt^2 split into its closed-form pieces.

    total = diffusion + potential + remainder, where
      diffusion = 2 gamma^2 (rho(x1) - rho(x))
      potential = 2 gamma (V(x1) - V(x)) rho(x)
      remainder = 2 gamma (V(x1) - V(x)) (cross - rho(x)),
    cross being Psi_r(x)Psi_r(x1) + Psi_i(x)Psi_i(x1).  The remainder is
    the grain-scale error term of the expansion, reported, never dropped.
    """

    total: float
    diffusion: float
    potential: float
    remainder: float


def two_cell_d2rho_dt2(state: TwoCellState) -> TwoCellSecondDerivative:
    g = state.gamma
    dv = state.V_x1 - state.V_x
    cross = (state.psi_r_x * state.psi_r_x1 + state.psi_i_x * state.psi_i_x1)
    diffusion = 2.0 * g * g * (state.rho_x1 - state.rho_x)
    potential = 2.0 * g * dv * state.rho_x
    remainder = 2.0 * g * dv * (cross - state.rho_x)
    return TwoCellSecondDerivative(
        total=diffusion + potential + remainder,
        diffusion=diffusion, potential=potential, remainder=remainder)


def integrate_two_cell(state: TwoCellState, t_end: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 trajectory of the pair system; returns (times, states[n,4])."""
    n_steps = int(round(t_end / dt))
    times = np.arange(n_steps + 1) * dt
    out = np.empty((n_steps + 1, 4))
    vec = state.vector()
    out[0] = vec

    def f(v):
        return two_cell_rhs(state.with_vector(v))

    for k in range(n_steps):
        k1 = f(vec)
        k2 = f(vec + 0.5 * dt * k1)
        k3 = f(vec + 0.5 * dt * k2)
        k4 = f(vec + dt * k3)
        vec = vec + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = vec
    return times, out


@dataclass
class EquivalenceReport:
    """Two-cell second derivative vs the matched continuum face flux."""

    gamma: float
    intensity_matched: float     # I with I/(m dx^2) = 2 gamma^2
    intensity_grain_law: float   # h^2 / (2 m^2 dx^3) for the same grid
    quantum_d2: float
    continuum_d2: float
    discrepancy_abs: float
    discrepancy_rel: float
    remainder_bound: float


def equivalence_report(state: TwoCellState, coeffs: DerivedCoefficients,
                       phys: PhysicalConfig, grid: GridSpec) -> EquivalenceReport:
    """Compare the pair system with the continuum operator on two cells.

    The continuum restriction carries one interior face.  Matching the
    diffusion channels requires I = 2 gamma^2 m dx^2 (the grain-law value
    is reported alongside for context); the potential channel is mapped so
    its leading term coincides, which leaves exactly the closed-form
    remainder as the discrepancy.
    """
    m = phys.sample_mass
    dx = grid.dx
    parts = two_cell_d2rho_dt2(state)
    i_matched = 2.0 * state.gamma**2 * m * dx**2
    drho = state.rho_x1 - state.rho_x
    continuum = (i_matched / (m * dx**2)) * drho + parts.potential
    disc = parts.total - continuum
    scale = max(abs(parts.total), abs(continuum), 1e-300)
    return EquivalenceReport(
        gamma=state.gamma,
        intensity_matched=i_matched,
        intensity_grain_law=coeffs.I,
        quantum_d2=parts.total,
        continuum_d2=continuum,
        discrepancy_abs=abs(disc),
        discrepancy_rel=abs(disc) / scale,
        remainder_bound=abs(parts.remainder),
    )
