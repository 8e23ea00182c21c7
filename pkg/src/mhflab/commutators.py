"""Commutators of spectral projectors with position/momentum observables,
scaling-exponent sweeps in hbar and b, and Wigner-transform diagnostics."""

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
    OperatorLike,
    as_matrix,
    assemble_hamiltonian,
    build_grid,
    momentum_operator,
    multiplication_operator,
    plane_wave_operator,
    position_power_operator,
)
from .spectra import (
    DegenerateThresholdError,
    DensityMatrix,
    SpectralDecomposition,
    eigendecompose,
    operator_function,
    schatten_norm,
    spectral_projector,
)

Array = np.ndarray

MAX_POSITION_POWER = 4


def commutator(A: OperatorLike, B: OperatorLike) -> Array:
    """[A, B] = AB - BA; anti-Hermitian when both inputs are Hermitian."""
    a, b = as_matrix(A), as_matrix(B)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    c = a @ b - b @ a
    herm_in = (np.abs(a - a.conj().T).max() == 0.0) and (np.abs(b - b.conj().T).max() == 0.0)
    if herm_in:
        scale = max(float(np.abs(c).max()), 1.0)
        dev = float(np.abs(c + c.conj().T).max())
        if dev > 1e-12 * scale:
            raise RuntimeError(f"commutator of Hermitian inputs not anti-Hermitian: {dev:.3e}")
    return c


def _apply(op: OperatorLike, X: Array, adjoint: bool = False) -> Array:
    if isinstance(op, DiagonalOperator):
        vals = np.conj(op.values) if adjoint else op.values
        return vals[:, None] * X
    m = as_matrix(op)
    return (m.conj().T @ X) if adjoint else (m @ X)


def _orth(columns: Array) -> Array:
    q, _ = np.linalg.qr(columns)
    return q


def projector_commutator_norms(orbitals: Array, op: OperatorLike) -> tuple[float, float, float]:
    """(trace, HS, operator) norms of [Q Q^dag, O] for orthonormal columns Q.

    [w, O] has range in span{Q, OQ} and corange in span{Q, O^dag Q}, so the
    singular values are those of the compressed 2N x 2N block; costs O(n^2 N)
    instead of the O(n^3) dense SVD.
    """
    Q = orbitals
    oq = _apply(op, Q)
    odq = _apply(op, Q, adjoint=True)
    wl = _orth(np.concatenate([Q, oq], axis=1))
    wr = _orth(np.concatenate([Q, odq], axis=1))
    # T = WL^dag (Q Q^dag O - O Q Q^dag) WR, assembled from thin factors only.
    t = (wl.conj().T @ Q) @ (odq.conj().T @ wr) - (wl.conj().T @ oq) @ (Q.conj().T @ wr)
    sv = np.linalg.svd(t, compute_uv=False)
    return float(sv.sum()), float(np.sqrt((sv ** 2).sum())), float(sv[0]) if sv.size else 0.0


def commutator_norms(omega: DensityMatrix, op: OperatorLike) -> tuple[float, float, float]:
    """Schatten (trace, HS, op) norms of [omega, O], using the rank-structured
    fast path for projectors and a dense SVD otherwise."""
    if omega.orbital_basis is not None:
        return projector_commutator_norms(omega.orbital_basis, op)
    c = commutator(omega.entries, as_matrix(op))
    sv = np.linalg.svd(c, compute_uv=False)
    return float(sv.sum()), float(np.sqrt((sv ** 2).sum())), float(sv[0]) if sv.size else 0.0


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservableSpec:
    """Tagged observable: one of f(x) | plane-wave alpha | P_j | x^beta."""

    kind: str
    beta: tuple[int, ...] | None = None
    alpha: tuple[float, ...] | None = None
    component: int | None = None
    func: Callable[[Array], Array] | None = None
    label: str = ""

    def tag(self) -> str:
        return self.label or self.kind


def position_observable(beta: Sequence[int]) -> ObservableSpec:
    beta = tuple(int(b) for b in beta)
    if sum(beta) > MAX_POSITION_POWER:
        raise ValueError(f"|beta| <= {MAX_POSITION_POWER} supported, got {beta}")
    return ObservableSpec(kind="position", beta=beta, label=f"x^{beta}")


def plane_wave_observable(alpha: Sequence[float]) -> ObservableSpec:
    alpha = tuple(float(a) for a in alpha)
    return ObservableSpec(kind="plane_wave", alpha=alpha, label=f"exp(i{alpha}.x)")


def momentum_observable(j: int) -> ObservableSpec:
    return ObservableSpec(kind="momentum", component=int(j), label=f"P_{j}")


def function_observable(f: Callable[[Array], Array], name: str = "f(x)") -> ObservableSpec:
    return ObservableSpec(kind="function", func=f, label=name)


def build_observable(spec: ObservableSpec, grid: Grid, fields: FieldSpec,
                     hbar: float, b: float) -> OperatorLike:
    if spec.kind == "position":
        return position_power_operator(grid, spec.beta)
    if spec.kind == "plane_wave":
        return plane_wave_operator(grid, spec.alpha)
    if spec.kind == "momentum":
        return momentum_operator(grid, fields, hbar, b, spec.component)
    if spec.kind == "function":
        return multiplication_operator(grid, spec.func)
    raise ValueError(f"unknown observable kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# Single-point report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommutatorReport:
    observable: str
    trace_norm: float
    hs_norm: float
    op_norm: float
    hbar: float
    b: float
    mu: float
    dim: int
    normalized_value: float
    note: str | None = None

    def __post_init__(self):
        tol = 1e-10 * max(self.trace_norm, 1.0)
        if not (self.op_norm <= self.hs_norm + tol and self.hs_norm <= self.trace_norm + tol):
            raise ValueError(
                f"norm ordering violated: op={self.op_norm} hs={self.hs_norm} tr={self.trace_norm}")


def initial_data_report(grid: Grid, fields: FieldSpec, hbar: float, b: float, mu: float,
                        observable: ObservableSpec,
                        decomp: SpectralDecomposition | None = None) -> CommutatorReport:
    """All three Schatten norms of [Pi_mu, O] with the hbar^{1-d} normalization."""
    if decomp is None:
        decomp = eigendecompose(assemble_hamiltonian(grid, fields, hbar, b))
    proj = spectral_projector(decomp, mu)
    op = build_observable(observable, grid, fields, hbar, b)
    tr, hs, on = commutator_norms(proj, op)
    note = None
    if b > 0 and mu < float(decomp.eigenvalues[0]) + 3.0 * hbar * b:
        # Continuum theory requires mu in the resolvent set of P^2; no lattice
        # analogue is enforced, so flag thresholds near the lowest Landau scale.
        note = "mu within ~3*hbar*b of the spectral bottom; resolvent-set hypothesis unverified"
    return CommutatorReport(observable=observable.tag(), trace_norm=tr, hs_norm=hs,
                            op_norm=on, hbar=hbar, b=b, mu=mu, dim=grid.dim,
                            normalized_value=tr / hbar ** (1 - grid.dim), note=note)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    parameter_name: str
    points: tuple[tuple[float, float], ...]
    exponent: float
    intercept: float
    residual_rms: float
    skipped: tuple[tuple[float, str], ...] = ()


def fit_power_law(points: Sequence[tuple[float, float]], parameter_name: str,
                  skipped: Sequence[tuple[float, str]] = ()) -> ScalingFit:
    """Ordinary least squares on log-log; residuals reported, never discarded."""
    pts = [(p, v) for p, v in points]
    if any(v <= 0 for _, v in pts):
        raise ValueError("zero or negative norm data: nothing to fit")
    if len(pts) < 2:
        raise ValueError(f"need at least 2 valid points to fit, got {len(pts)}")
    lx = np.log([p for p, _ in pts])
    ly = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return ScalingFit(parameter_name=parameter_name, points=tuple(pts),
                      exponent=float(slope), intercept=float(intercept),
                      residual_rms=float(np.sqrt(np.mean(resid ** 2))),
                      skipped=tuple(skipped))


def auto_points_per_axis(hbar: float, half_length: float, mu: float,
                         resolution: float = 0.4) -> int:
    """Odd M so the Fermi wavenumber sqrt(mu)/hbar is sampled with
    k*h <= resolution; d=1 sizes stay cheap for dense eigensolvers."""
    k_max = math.sqrt(max(mu, hbar)) / hbar
    m = int(math.ceil(2.0 * half_length * k_max / resolution)) + 1
    return m + 1 if m % 2 == 0 else m


def _resolve_points(points_per_axis, hbar: float, dim: int, half_length: float, mu: float) -> int:
    if points_per_axis == "auto":
        if dim != 1:
            raise ValueError("auto grid sizing is supported in d=1 only; pass an explicit M for d=2")
        return auto_points_per_axis(hbar, half_length, mu)
    return int(points_per_axis)


def scaling_sweep(fields: FieldSpec, dim: int, half_length: float, b: float, mu: float,
                  observable: ObservableSpec, hbar_ladder: Sequence[float],
                  points_per_axis: int | str | Sequence[int] = "auto") -> ScalingFit:
    """Trace norm of [Pi_mu, O] over a geometric hbar ladder at fixed energy mu."""
    ladder = list(hbar_ladder)
    if len(ladder) < 4:
        raise ValueError(f"need >= 4 hbar values, got {len(ladder)}")
    per_point = (list(points_per_axis) if isinstance(points_per_axis, (list, tuple))
                 else [points_per_axis] * len(ladder))
    points: list[tuple[float, float]] = []
    skipped: list[tuple[float, str]] = []
    for hbar, mspec in zip(ladder, per_point):
        m = _resolve_points(mspec, hbar, dim, half_length, mu)
        grid = build_grid(dim, m, half_length)
        try:
            rep = initial_data_report(grid, fields, hbar, b, mu, observable)
        except DegenerateThresholdError as exc:
            skipped.append((hbar, str(exc)))
            continue
        points.append((hbar, rep.trace_norm))
    return fit_power_law(points, "hbar", skipped)


@dataclass(frozen=True)
class BSweepRow:
    b: float
    bracket: float                     # <b> = sqrt(1 + b^2)
    trace_norm: float
    normalized: float                  # trace_norm / <b>^(r+1)


@dataclass(frozen=True)
class BSweepReport:
    observable: str
    power: int                         # r: 0 for position, 1 for momentum
    rows: tuple[BSweepRow, ...]
    baseline: float
    bound_factor: float
    holds: bool
    bracket_fit: ScalingFit | None     # trace norm vs <b> over the b > 0 rows


def b_dependence_sweep(grid: Grid, fields: FieldSpec, hbar: float, mu: float,
                       b_ladder: Sequence[float], observable: ObservableSpec, power: int,
                       c0: float = 2.0, bound_factor: float = 10.0,
                       decomps: dict[float, SpectralDecomposition] | None = None) -> BSweepReport:
    """Normalized trace norms over a b ladder: trace/<b>^(r+1) must stay within
    bound_factor of the b=0 baseline (Japanese-bracket normalization)."""
    ladder = list(b_ladder)
    if ladder[0] != 0.0:
        raise ValueError("b ladder must start at 0 (the baseline entry)")
    if any(bv > c0 / hbar for bv in ladder):
        raise ValueError(f"b ladder exceeds the admissible window b <= C0/hbar = {c0 / hbar}")
    rows = []
    for bv in ladder:
        decomp = decomps.get(bv) if decomps else None
        rep = initial_data_report(grid, fields, hbar, bv, mu, observable, decomp=decomp)
        bracket = math.hypot(1.0, bv)
        rows.append(BSweepRow(b=bv, bracket=bracket, trace_norm=rep.trace_norm,
                              normalized=rep.trace_norm / bracket ** (power + 1)))
    baseline = rows[0].normalized
    holds = all(r.normalized <= bound_factor * baseline for r in rows)
    positive = [(r.bracket, r.trace_norm) for r in rows if r.b > 0 and r.trace_norm > 0]
    fit = fit_power_law(positive, "<b>") if len(positive) >= 2 else None
    return BSweepReport(observable=observable.tag(), power=power, rows=tuple(rows),
                        baseline=baseline, bound_factor=bound_factor, holds=holds,
                        bracket_fit=fit)


# ---------------------------------------------------------------------------
# Plane-wave uniformity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneWaveReport:
    sup_value: float
    argmax_alpha: tuple[float, ...]
    position_bound: float
    holds: bool
    n_samples: int


def alpha_lattice(dim: int, box: float = 4.0, points_per_axis: int = 9) -> Array:
    """Sampling lattice for alpha including 0 and the axis directions."""
    axis = np.linspace(-box, box, points_per_axis)
    if dim == 1:
        return axis[:, None]
    A1, A2 = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([A1.ravel(), A2.ravel()])


def plane_wave_uniformity(omega: DensityMatrix, grid: Grid, box: float = 4.0,
                          points_per_axis: int = 9) -> PlaneWaveReport:
    """Sampled sup_alpha ||[w, e^{i alpha x}]||_1 / (1 + |alpha|), checked against
    the position-commutator bound ||[w, x]||_1 (l^2 over coordinates)."""
    alphas = alpha_lattice(grid.dim, box, points_per_axis)
    best, best_alpha = 0.0, tuple(0.0 for _ in range(grid.dim))
    for a in alphas:
        tr, _, _ = commutator_norms(omega, plane_wave_operator(grid, a))
        val = tr / (1.0 + float(np.linalg.norm(a)))
        if val > best:
            best, best_alpha = val, tuple(float(x) for x in a)
    bound = math.sqrt(sum(
        commutator_norms(omega, position_power_operator(grid, tuple(int(i == ax) for i in range(grid.dim))))[0] ** 2
        for ax in range(grid.dim)))
    return PlaneWaveReport(sup_value=best, argmax_alpha=best_alpha, position_bound=bound,
                           holds=best <= bound * (1.0 + 1e-10), n_samples=alphas.shape[0])


# ---------------------------------------------------------------------------
# Lipschitz transfer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzReport:
    lhs: float
    rhs: float
    lipschitz_constant: float
    holds: bool


def lipschitz_transfer_check(f: Callable[[Array], Array], lipschitz_constant: float,
                             A: OperatorLike, B: OperatorLike) -> LipschitzReport:
    """Check ||[f(A), B]||_1 <= L ||[A, B]||_1 for L-Lipschitz f."""
    decomp = eigendecompose(A)
    fa = operator_function(decomp, f)
    lhs = schatten_norm(commutator(fa, B), 1)
    rhs = lipschitz_constant * schatten_norm(commutator(A, B), 1)
    return LipschitzReport(lhs=lhs, rhs=rhs, lipschitz_constant=lipschitz_constant,
                           holds=lhs <= rhs * (1.0 + 1e-10) + 1e-12)


# ---------------------------------------------------------------------------
# Magnetic momentum identities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentumIdentityReport:
    pair_residual: float          # ||([P1,P2] - i hbar b B12) u|| on smooth probes
    square_residual: float        # ||([P1^2,P2] - 2 i hbar b B12 P1) u|| likewise
    field_b12: float
    spacing: float
    hbar: float
    b: float


def _smooth_probes(grid: Grid) -> Array:
    """Deterministic smooth probe vectors vanishing near the boundary; the
    continuum identities are measured on such states, where the residual is
    governed by the O(h^2) midpoint error rather than lattice-edge modes."""
    pts = grid.sites()
    L = grid.half_length
    envelope = np.exp(-np.sum(pts * pts, axis=1) / (2.0 * (L / 4.0) ** 2))
    mods = [np.ones(grid.n_sites), pts[:, 0] / L, np.cos(np.pi * pts[:, 0] / (2 * L))]
    if grid.dim == 2:
        mods += [pts[:, 1] / L, pts[:, 0] * pts[:, 1] / L ** 2]
    probes = np.column_stack([envelope * m for m in mods])
    return probes / np.linalg.norm(probes, axis=0)


def momentum_commutator_identity_check(grid: Grid, fields: FieldSpec, hbar: float,
                                       b: float) -> MomentumIdentityReport:
    """Residuals of [P1,P2] = i hbar b B12 and [P1^2,P2] = 2 i hbar b B12 P1
    (constant field), measured on smooth probes restricted to interior sites."""
    if grid.dim != 2:
        raise ValueError("momentum identities are a d=2 diagnostic")
    Bmat = fields.vector_potential.field_matrix(grid.dim)
    if Bmat is None:
        raise ValueError("momentum identities require a linear vector potential")
    b12 = float(Bmat[0, 1])
    P1 = momentum_operator(grid, fields, hbar, b, 1).entries
    P2 = momentum_operator(grid, fields, hbar, b, 2).entries
    n = grid.n_sites
    R1 = (P1 @ P2 - P2 @ P1) - 1j * hbar * b * b12 * np.eye(n)
    R2 = (P1 @ P1 @ P2 - P2 @ P1 @ P1) - 2j * hbar * b * b12 * P1
    probes = _smooth_probes(grid)
    mask = grid.interior_mask(1)
    r1 = float(np.abs(np.linalg.norm((R1 @ probes)[mask], axis=0)).max())
    r2 = float(np.abs(np.linalg.norm((R2 @ probes)[mask], axis=0)).max())
    return MomentumIdentityReport(pair_residual=r1, square_residual=r2, field_b12=b12,
                                  spacing=grid.spacing, hbar=hbar, b=b)


# ---------------------------------------------------------------------------
# Wigner transform (d = 1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WignerTransform:
    values: Array            # shape (M, M), real
    x: Array
    xi: Array
    hbar: float


def _gamma_matrix(gamma: DensityMatrix | Array) -> Array:
    return gamma.entries if isinstance(gamma, DensityMatrix) else np.asarray(gamma)


def _wigner_values(g: Array, grid: Grid, xi_over_hbar: Array) -> Array:
    """W[k, m] = sum_r exp(i * 2 r h * xi_m / hbar) * g[k+r, k-r]  (kernel * h)."""
    M, h = grid.points_per_axis, grid.spacing
    out = np.zeros((M, xi_over_hbar.shape[0]), dtype=complex)
    for k in range(M):
        rmax = min(k, M - 1 - k)
        r = np.arange(-rmax, rmax + 1)
        anti = g[k + r, k - r]
        phases = np.exp(1j * np.outer(r, 2.0 * h * xi_over_hbar))
        out[k] = anti @ phases
    return out


def wigner_xi_grid(grid: Grid, hbar: float) -> Array:
    """Conjugate grid xi_m = pi hbar m / L with M-1 points: the transform's
    phases are periodic with index period (M-1)/2, so an exact multiple of the
    period keeps the discrete frequencies orthogonal (the phase-space integral
    then reproduces the trace exactly, not just to O(1/M))."""
    M = grid.points_per_axis
    m = np.arange(M - 1) - (M - 1) // 2
    return math.pi * hbar * m / grid.half_length


def wigner_transform(gamma: DensityMatrix | Array, grid: Grid, hbar: float) -> WignerTransform:
    """Discrete Wigner transform over symmetric site offsets; xi on the
    conjugate grid xi_m = pi hbar m / L.  Normalization:
    sum_k sum_m W dx dxi / (2 pi hbar) ~ tr(gamma)."""
    if grid.dim != 1:
        raise ValueError("the Wigner diagnostic supports d=1 only")
    g = _gamma_matrix(gamma)
    if g.shape != (grid.n_sites, grid.n_sites):
        raise ValueError(f"gamma must be {grid.n_sites} x {grid.n_sites}, got {g.shape}")
    xi = wigner_xi_grid(grid, hbar)
    vals = _wigner_values(g, grid, xi / hbar)
    imag_max = float(np.abs(vals.imag).max())
    if imag_max > 1e-9 * max(1.0, float(np.abs(vals.real).max())):
        raise RuntimeError(f"Wigner transform of a Hermitian input is not real: {imag_max:.3e}")
    return WignerTransform(values=vals.real, x=grid.axis_coords(), xi=xi, hbar=hbar)


def wigner_integral(w: WignerTransform, grid: Grid) -> float:
    """Phase-space integral sum W dx dxi / (2 pi hbar); equals tr(gamma) up to
    the conjugate-lattice truncation."""
    dxi = math.pi * w.hbar / grid.half_length
    return float(w.values.sum() * grid.spacing * dxi / (2.0 * math.pi * w.hbar))


@dataclass(frozen=True)
class QuantumGradientReport:
    position_residual: float     # || W_[x,gamma] + i hbar d_xi W ||_max (interior)
    momentum_residual: float     # || W_[P,gamma] + i hbar d_x W ||_max (interior)
    wigner_scale: float
    spacing: float
    hbar: float


def quantum_gradient_check(gamma: DensityMatrix | Array, grid: Grid,
                           hbar: float) -> QuantumGradientReport:
    """Residuals of the Wigner gradient identities

        W_[x, gamma]        = -i hbar d_xi W_gamma
        W_[-i hbar d, gamma] = -i hbar d_x  W_gamma

    Both derivatives are discrete: d_x is the central difference on the site
    grid; d_xi is a central difference with step delta_xi = pi hbar h / L^2,
    tied to the spatial resolution so both residuals refine as h -> h/2.
    """
    if grid.dim != 1:
        raise ValueError("the Wigner diagnostic supports d=1 only")
    g = _gamma_matrix(gamma)
    M, h, L = grid.points_per_axis, grid.spacing, grid.half_length
    x = grid.axis_coords()
    xi = wigner_xi_grid(grid, hbar)
    w0 = _wigner_values(g, grid, xi / hbar)
    scale = float(np.abs(w0).max())
    interior = slice(1, M - 1)

    # position identity: [x, gamma] vs -i hbar d_xi W
    comm_x = x[:, None] * g - g * x[None, :]
    w_comm_x = _wigner_values(comm_x, grid, xi / hbar)
    delta = math.pi * hbar * h / L ** 2
    w_plus = _wigner_values(g, grid, (xi + delta) / hbar)
    w_minus = _wigner_values(g, grid, (xi - delta) / hbar)
    dxi_w = (w_plus - w_minus) / (2.0 * delta)
    res_pos = float(np.abs(w_comm_x[interior] + 1j * hbar * dxi_w[interior]).max())

    # momentum identity: [-i hbar D_central, gamma] vs -i hbar d_x W
    C = np.zeros((M, M))
    idx = np.arange(M - 1)
    C[idx, idx + 1] = 1.0 / (2.0 * h)
    C[idx + 1, idx] = -1.0 / (2.0 * h)
    P = -1j * hbar * C
    comm_p = P @ g - g @ P
    w_comm_p = _wigner_values(comm_p, grid, xi / hbar)
    dx_w = (w0[2:] - w0[:-2]) / (2.0 * h)
    res_mom = float(np.abs(w_comm_p[interior] + 1j * hbar * dx_w).max())

    return QuantumGradientReport(position_residual=res_pos, momentum_residual=res_mom,
                                 wigner_scale=scale, spacing=h, hbar=hbar)
