"""Time-dependent Hartree-Fock dynamics with direct and exchange terms, and
the propagation monitor for the semiclassical commutator structure."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import (
    DiagonalOperator,
    FieldSpec,
    Grid,
    HermitianOperator,
    Interaction,
    OperatorLike,
    as_matrix,
    assemble_hamiltonian,
    difference_vectors,
    hermitian,
    momentum_operator,
    plane_wave_operator,
    position_power_operator,
)
from .commutators import alpha_lattice, commutator_norms, projector_commutator_norms
from .spectra import DensityMatrix

Array = np.ndarray

PROJECTOR_DRIFT_TOL = 1e-9
TRACE_DRIFT_TOL = 1e-9
DENSITY_NEG_TOL = 1e-12


class EvolutionError(RuntimeError):
    """Invariant breach during propagation; carries the last valid state."""

    def __init__(self, message: str, last_state: "HFState | None" = None):
        super().__init__(message)
        self.last_state = last_state


# ---------------------------------------------------------------------------
# Interaction tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InteractionTables:
    """Sampled pair potential on realized site differences plus the discrete
    Fourier functionals entering the propagation bounds."""

    matrix: Array              # W[k, m] = W(x_k - x_m)
    fourier_l1: float          # int |What(p)| dp   (discrete)
    fourier_moment: float      # int (1 + |p|^2) |What(p)| dp  (discrete)


def _difference_samples(interaction: Interaction, grid: Grid) -> Array:
    vals = interaction(difference_vectors(grid))
    n_axis = 2 * grid.points_per_axis - 1
    shape = (n_axis,) if grid.dim == 1 else (n_axis, n_axis)
    return vals.reshape(shape)


def _fourier_functionals(w_diff: Array, grid: Grid) -> tuple[float, float]:
    """Discretize What(p) = (2 pi)^{-d} int W(y) e^{-ip.y} dy on the conjugate
    lattice of the difference lattice; integrals use the cell measure dp^d."""
    h, d = grid.spacing, grid.dim
    n_axis = w_diff.shape[0]
    what = np.fft.fftn(np.fft.ifftshift(w_diff)) * h ** d / (2.0 * math.pi) ** d
    p_axis = 2.0 * math.pi * np.fft.fftfreq(n_axis, d=h)
    if d == 1:
        p_sq = p_axis ** 2
    else:
        P1, P2 = np.meshgrid(p_axis, p_axis, indexing="ij")
        p_sq = P1 ** 2 + P2 ** 2
    dp = (2.0 * math.pi / (n_axis * h)) ** d
    mag = np.abs(what)
    return float(mag.sum() * dp), float(((1.0 + p_sq) * mag).sum() * dp)


def interaction_tables(interaction: Interaction | None, grid: Grid) -> InteractionTables:
    n = grid.n_sites
    if interaction is None:
        return InteractionTables(matrix=np.zeros((n, n)), fourier_l1=0.0, fourier_moment=0.0)
    w_diff = _difference_samples(interaction, grid)
    M = grid.points_per_axis
    if grid.dim == 1:
        k = np.arange(n)
        wmat = w_diff[k[:, None] - k[None, :] + M - 1]
    else:
        i1, i2 = np.divmod(np.arange(n), M)
        wmat = w_diff[i1[:, None] - i1[None, :] + M - 1, i2[:, None] - i2[None, :] + M - 1]
    l1, moment = _fourier_functionals(w_diff, grid)
    return InteractionTables(matrix=wmat, fourier_l1=l1, fourier_moment=moment)


def interaction_moment(interaction: Interaction, grid: Grid) -> float:
    """Discrete int (1 + |p|^2) |What(p)| dp, the constant feeding the
    propagation bounds."""
    return _fourier_functionals(_difference_samples(interaction, grid), grid)[1]


# ---------------------------------------------------------------------------
# State and mean-field pieces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HFState:
    """Rank-N projector state: time, density matrix (with orbital basis),
    real-space density, and the cached HF Hamiltonian."""

    time: float
    omega: DensityMatrix
    rho: Array
    h_hf: HermitianOperator | None = None

    @property
    def orbitals(self) -> Array:
        return self.omega.orbital_basis


def density_from_state(omega: DensityMatrix | Array, grid: Grid, N: int) -> Array:
    """rho(x_k) = omega_kk / (N h^d) under the kernel-matrix convention, so
    h^d sum rho = 1."""
    entries = omega.entries if isinstance(omega, DensityMatrix) else np.asarray(omega)
    trace = float(np.trace(entries).real)
    if abs(trace - N) > 1e-6 * max(N, 1):
        raise EvolutionError(f"state corruption: trace {trace} != N = {N}")
    return np.diag(entries).real / (N * grid.spacing ** grid.dim)


def mean_field_potential(rho: Array, interaction: Interaction | Array, grid: Grid) -> DiagonalOperator:
    """Direct term (W * rho)(x_k) = h^d sum_m W(x_k - x_m) rho(x_m)."""
    wmat = (interaction_tables(interaction, grid).matrix
            if isinstance(interaction, Interaction) else np.asarray(interaction))
    return DiagonalOperator(values=grid.spacing ** grid.dim * (wmat @ rho))


def exchange_operator(omega: DensityMatrix | Array, interaction: Interaction | Array,
                      grid: Grid, N: int) -> HermitianOperator:
    """Exchange term with kernel X(x,y) = N^{-1} omega(x,y) W(x-y).

    Matrix form: kernel-to-matrix conversion multiplies by h^d, and the omega
    kernel is omega_matrix / h^d, so the h^d factors cancel exactly:
        X_km = h^d * [N^{-1} (omega_km / h^d) W(x_k - x_m)] = omega_km W_km / N.
    """
    entries = omega.entries if isinstance(omega, DensityMatrix) else np.asarray(omega)
    wmat = (interaction_tables(interaction, grid).matrix
            if isinstance(interaction, Interaction) else np.asarray(interaction))
    return hermitian(entries * wmat / N)


def hf_hamiltonian_matrix(omega_entries: Array, h0: Array, tables: InteractionTables,
                          grid: Grid, N: int) -> Array:
    """h_HF = H + diag(W * rho) - X for a (not necessarily pure) omega."""
    rho = np.diag(omega_entries).real / (N * grid.spacing ** grid.dim)
    direct = grid.spacing ** grid.dim * (tables.matrix @ rho)
    h = h0 + np.diag(direct) - omega_entries * tables.matrix / N
    return (h + h.conj().T) / 2.0


def hf_energy(omega_entries: Array, h0: Array, tables: InteractionTables, N: int) -> float:
    """Conserved HF energy tr(H w) + (2N)^{-1} sum_km W_km (w_kk w_mm - |w_km|^2)."""
    d = np.diag(omega_entries).real
    direct = float(d @ tables.matrix @ d)
    exch = float(np.sum(tables.matrix * np.abs(omega_entries) ** 2))
    return float(np.trace(h0 @ omega_entries).real) + (direct - exch) / (2.0 * N)


# ---------------------------------------------------------------------------
# Midpoint unitary integrator
# ---------------------------------------------------------------------------

def unitary_exponential(h_matrix: Array, dt_over_hbar: float) -> Array:
    """exp(-i dt h / hbar) through the Hermitian eigendecomposition."""
    w, v = np.linalg.eigh(h_matrix)
    return (v * np.exp(-1j * dt_over_hbar * w)) @ v.conj().T


def midpoint_step_orbitals(orbitals: Array, dt: float, hbar: float,
                           h_of_omega: Callable[[Array], Array]) -> Array:
    """Self-consistent midpoint step (one fixed-point pass): predict with
    U0 = exp(-i dt h(w)/hbar), form h at the averaged state, apply the
    corrected unitary.  Conjugation keeps the projector manifold exact."""
    omega = orbitals @ orbitals.conj().T
    u0 = unitary_exponential(h_of_omega(omega), dt / hbar)
    predicted = u0 @ orbitals
    omega_mid = (omega + predicted @ predicted.conj().T) / 2.0
    u = unitary_exponential(h_of_omega(omega_mid), dt / hbar)
    return u @ orbitals


def _check_orbitals(orbitals: Array, N: int) -> None:
    gram_dev = float(np.abs(orbitals.conj().T @ orbitals - np.eye(orbitals.shape[1])).max())
    if gram_dev > PROJECTOR_DRIFT_TOL:
        raise EvolutionError(f"projector invariant breach: ||Q^dag Q - I|| = {gram_dev:.3e}")
    trace = float(np.sum(np.abs(orbitals) ** 2))
    if abs(trace - N) > TRACE_DRIFT_TOL * max(N, 1):
        raise EvolutionError(f"trace invariant breach: tr = {trace!r} != {N}")


def _state_from_orbitals(time: float, orbitals: Array, grid: Grid, N: int,
                         h_hf: Array | None = None) -> HFState:
    omega = DensityMatrix(entries=orbitals @ orbitals.conj().T, orbital_basis=orbitals)
    rho = density_from_state(omega, grid, N)
    if rho.min() < -DENSITY_NEG_TOL:
        raise EvolutionError(f"negative density {rho.min():.3e}")
    return HFState(time=time, omega=omega, rho=rho,
                   h_hf=None if h_hf is None else hermitian(h_hf))


def hf_step(state: HFState, dt: float, grid: Grid, fields: FieldSpec, hbar: float,
            b: float, N: int, h0: Array | None = None,
            tables: InteractionTables | None = None) -> HFState:
    """Advance one midpoint step; pure function of the state."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if h0 is None:
        h0 = assemble_hamiltonian(grid, fields, hbar, b).entries
    if tables is None:
        tables = interaction_tables(fields.interaction, grid)
    h_of = lambda om: hf_hamiltonian_matrix(om, h0, tables, grid, N)
    new_orbitals = midpoint_step_orbitals(state.orbitals, dt, hbar, h_of)
    _check_orbitals(new_orbitals, N)
    new_omega = new_orbitals @ new_orbitals.conj().T
    return _state_from_orbitals(state.time + dt, new_orbitals, grid, N,
                                h_hf=h_of(new_omega))


# ---------------------------------------------------------------------------
# Propagation monitor
# ---------------------------------------------------------------------------

def monitor_betas(dim: int, degree: int) -> list[tuple[int, ...]]:
    """Multi-indices 1 <= |beta| <= degree (the |beta|=0 commutator vanishes)."""
    if dim == 1:
        return [(k,) for k in range(1, degree + 1)]
    out = []
    for total in range(1, degree + 1):
        for b1 in range(total + 1):
            out.append((b1, total - b1))
    return out


@dataclass(frozen=True)
class PropagationMonitor:
    """Per-step commutator norms of the evolving state, divided by hbar N."""

    times: Array
    plane_wave_sup: Array
    momentum: Array
    position_powers: dict[tuple[int, ...], Array]
    gronwall: Array
    hbar: float
    N: int


@dataclass(frozen=True)
class GrowthFit:
    """Exponential envelope gronwall(t) <= C exp(rate * t) plus the raw OLS fit."""

    ols_rate: float
    ols_log_amplitude: float
    envelope_rate: float
    envelope_amplitude: float


def fit_growth(times: Array, gronwall: Array, rate_floor: float = 1e-6) -> GrowthFit:
    if np.any(gronwall <= 0):
        raise ValueError("Gronwall functional vanishes somewhere; no exponential fit")
    ly = np.log(gronwall)
    slope, intercept = np.polyfit(times, ly, 1)
    env_rate = max(float(slope), rate_floor)
    env_amp = float(np.exp(np.max(ly - env_rate * times)))
    return GrowthFit(ols_rate=float(slope), ols_log_amplitude=float(intercept),
                     envelope_rate=env_rate, envelope_amplitude=env_amp)


@dataclass(frozen=True)
class ExchangeBoundReport:
    time: float
    observable: str
    lhs: float
    rhs: float
    holds: bool


def exchange_bound_check(omega: DensityMatrix, X: OperatorLike, R: OperatorLike,
                         w: Interaction | float, N: int, grid: Grid | None = None,
                         label: str = "R", time: float = 0.0) -> ExchangeBoundReport:
    """||[w, [X, R]]||_1 <= (2/N) (int |What|) ||[R, w]||_1, with int |What|
    from the discrete Fourier sum of the sampled interaction (or passed in
    precomputed as a float)."""
    if isinstance(w, Interaction):
        if grid is None:
            raise ValueError("pass the grid when giving the interaction by its callable")
        fourier_l1 = interaction_tables(w, grid).fourier_l1
    else:
        fourier_l1 = float(w)
    xr = commutator_like(X, R)
    lhs = commutator_norms(omega, xr)[0]
    rhs = (2.0 / N) * fourier_l1 * commutator_norms(omega, R)[0]
    return ExchangeBoundReport(time=time, observable=label, lhs=lhs, rhs=rhs,
                               holds=lhs <= rhs * (1.0 + 1e-10) + 1e-12)


def commutator_like(A: OperatorLike, B: OperatorLike) -> Array:
    a, b = as_matrix(A), as_matrix(B)
    return a @ b - b @ a


@dataclass
class _MonitorOps:
    momenta: list[Array]
    betas: list[tuple[int, ...]]
    beta_ops: list[DiagonalOperator]
    alphas: Array
    alpha_ops: list[DiagonalOperator]


def _monitor_ops(grid: Grid, fields: FieldSpec, hbar: float, b: float,
                 alpha_box: float, alpha_points: int) -> _MonitorOps:
    momenta = [momentum_operator(grid, fields, hbar, b, j + 1).entries for j in range(grid.dim)]
    betas = monitor_betas(grid.dim, max(fields.scalar_potential.degree, 1))
    beta_ops = [position_power_operator(grid, beta) for beta in betas]
    alphas = alpha_lattice(grid.dim, alpha_box, alpha_points)
    alpha_ops = [plane_wave_operator(grid, a) for a in alphas]
    return _MonitorOps(momenta=momenta, betas=betas, beta_ops=beta_ops,
                       alphas=alphas, alpha_ops=alpha_ops)


def _trace_norm(orbitals: Array, op: OperatorLike) -> float:
    return projector_commutator_norms(orbitals, op)[0]


def _monitor_row(orbitals: Array, ops: _MonitorOps) -> tuple[float, float, list[float]]:
    sup_pw = 0.0
    for a, op in zip(ops.alphas, ops.alpha_ops):
        tr = _trace_norm(orbitals, op)
        sup_pw = max(sup_pw, tr / (1.0 + float(np.linalg.norm(a))))
    mom = math.sqrt(sum(_trace_norm(orbitals, p) ** 2 for p in ops.momenta))
    betas = [_trace_norm(orbitals, op) for op in ops.beta_ops]
    return sup_pw, mom, betas


@dataclass(frozen=True)
class HFTrajectory:
    times: Array
    orbital_bases: list[Array]
    monitor: PropagationMonitor
    energies: Array
    growth_fit: GrowthFit | None
    exchange_reports: list[ExchangeBoundReport]
    grid: Grid
    hbar: float
    N: int

    def state(self, index: int) -> HFState:
        return _state_from_orbitals(float(self.times[index]), self.orbital_bases[index],
                                    self.grid, self.N)


def evolve(omega0: DensityMatrix, grid: Grid, fields: FieldSpec, hbar: float, b: float,
           N: int, T: float, dt: float, alpha_box: float = 4.0, alpha_points: int = 9,
           exchange_check_every: int = 10,
           exchange_observables: Sequence[str] = ("position", "momentum")) -> HFTrajectory:
    """Propagate the HF equation from a rank-N projector and record the
    semiclassical-structure monitor at every accepted step."""
    if omega0.orbital_basis is None:
        raise ValueError("initial omega must carry its orbital basis (a rank-N projector)")
    if omega0.orbital_basis.shape[1] != N:
        raise ValueError(f"initial projector has rank {omega0.orbital_basis.shape[1]}, expected {N}")
    h0 = assemble_hamiltonian(grid, fields, hbar, b).entries
    tables = interaction_tables(fields.interaction, grid)
    h_of = lambda om: hf_hamiltonian_matrix(om, h0, tables, grid, N)
    ops = _monitor_ops(grid, fields, hbar, b, alpha_box, alpha_points)

    n_steps = int(round(T / dt))
    times = np.arange(n_steps + 1) * dt
    orbitals = omega0.orbital_basis.astype(complex)
    scale = hbar * N

    bases: list[Array] = []
    sup_series, mom_series, energy_series = [], [], []
    beta_series: dict[tuple[int, ...], list[float]] = {b_: [] for b_ in ops.betas}
    exch_reports: list[ExchangeBoundReport] = []

    for step in range(n_steps + 1):
        _check_orbitals(orbitals, N)
        bases.append(orbitals)
        omega_entries = orbitals @ orbitals.conj().T
        sup_pw, mom, betas = _monitor_row(orbitals, ops)
        sup_series.append(sup_pw / scale)
        mom_series.append(mom / scale)
        for b_, val in zip(ops.betas, betas):
            beta_series[b_].append(val / scale)
        energy_series.append(hf_energy(omega_entries, h0, tables, N))

        if exchange_check_every and step % exchange_check_every == 0 and fields.interaction is not None:
            omega_dm = DensityMatrix(entries=omega_entries, orbital_basis=orbitals)
            X = omega_entries * tables.matrix / N
            checks: list[tuple[str, OperatorLike]] = []
            if "position" in exchange_observables:
                checks += [(f"x_{j+1}", ops.beta_ops[ops.betas.index(tuple(int(i == j) for i in range(grid.dim)))])
                           for j in range(grid.dim)]
            if "momentum" in exchange_observables:
                checks += [(f"P_{j+1}", ops.momenta[j]) for j in range(grid.dim)]
            for label, R in checks:
                exch_reports.append(exchange_bound_check(
                    omega_dm, X, R, tables.fourier_l1, N, label=label, time=float(times[step])))

        if step < n_steps:
            orbitals = midpoint_step_orbitals(orbitals, dt, hbar, h_of)

    gron = (np.asarray(sup_series) + np.asarray(mom_series)
            + sum(np.asarray(v) for v in beta_series.values()))
    monitor = PropagationMonitor(
        times=times, plane_wave_sup=np.asarray(sup_series), momentum=np.asarray(mom_series),
        position_powers={k: np.asarray(v) for k, v in beta_series.items()},
        gronwall=gron, hbar=hbar, N=N)
    growth = fit_growth(times, gron) if np.all(gron > 0) else None
    return HFTrajectory(times=times, orbital_bases=bases, monitor=monitor,
                        energies=np.asarray(energy_series), growth_fit=growth,
                        exchange_reports=exch_reports, grid=grid, hbar=hbar, N=N)


def free_evolution(omega0: DensityMatrix, h0: Array, hbar: float, t: float) -> Array:
    """Closed-form conjugation e^{-itH/hbar} w e^{itH/hbar} (oracle for W = 0)."""
    u = unitary_exponential(h0, t / hbar)
    return u @ omega0.entries @ u.conj().T
