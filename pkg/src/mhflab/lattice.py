"""Grids, potentials, and dense finite-difference magnetic Schrodinger operators.

The domain is the box [-L, L]^d (d = 1 or 2) with M points per axis and
Dirichlet truncation: amplitudes on sites outside the box are zero.  All
operators are dense matrices over the row-major site enumeration.

Conventions
-----------
* Coefficient vectors carry the plain Euclidean inner product; the grid
  weight h^d enters only when converting between integral kernels and
  matrices: K_matrix[j, k] = kernel(x_j, x_k) * h^d.  Traces of operators
  are then plain matrix traces.
* The Hamiltonian kinetic term is assembled as sum_j (Pj+)^dag (Pj+) with
  the forward difference Pj+ living on links.  The vector potential is
  sampled at link midpoints and couples through the symmetric average of
  the two link endpoints, so the kinetic part is Hermitian PSD by
  construction and reduces to the standard second-difference stencil when
  b = 0.
* The observable momentum operator uses central differences (Hermitian,
  second-order); it is not the square root of the assembled kinetic term,
  the discrepancy is a documented O(h) discretization effect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

HERMITICITY_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Rectangular lattice on [-L, L]^dim with Dirichlet boundary."""

    dim: int
    points_per_axis: int
    half_length: float
    spacing: float
    boundary: str = "dirichlet"

    @property
    def n_sites(self) -> int:
        return self.points_per_axis ** self.dim

    def axis_coords(self) -> Array:
        M, L = self.points_per_axis, self.half_length
        return -L + self.spacing * np.arange(M)

    def sites(self) -> Array:
        """All site coordinates, shape (n_sites, dim), row-major over axes."""
        x = self.axis_coords()
        if self.dim == 1:
            return x[:, None]
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X1.ravel(), X2.ravel()])

    def link_midpoints(self) -> Array:
        """Midpoints of the M+1 links along one axis (two are half outside)."""
        M, L, h = self.points_per_axis, self.half_length, self.spacing
        return -L + (np.arange(M + 1) - 0.5) * h

    def interior_mask(self, depth: int = 1) -> Array:
        """Boolean mask of sites at least `depth` layers from the boundary."""
        M = self.points_per_axis
        axis = (np.arange(M) >= depth) & (np.arange(M) < M - depth)
        if self.dim == 1:
            return axis
        return np.logical_and.outer(axis, axis).ravel()


def build_grid(dim: int, points_per_axis: int, half_length: float) -> Grid:
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if points_per_axis < 3:
        raise ValueError(
            f"points_per_axis must be >= 3 (no interior point otherwise), got {points_per_axis}"
        )
    if not np.isfinite(half_length) or half_length <= 0:
        raise ValueError(f"half_length must be finite and positive, got {half_length}")
    spacing = 2.0 * half_length / (points_per_axis - 1)
    return Grid(dim=dim, points_per_axis=points_per_axis,
                half_length=float(half_length), spacing=spacing)


# ---------------------------------------------------------------------------
# Field specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VectorPotential:
    """Magnetic vector potential a: R^d -> R^d, evaluated on point batches."""

    name: str
    func: Callable[[Array], Array]
    linear_matrix: Array | None = None  # a(x) = A @ x when linear

    def __call__(self, points: Array) -> Array:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.func(pts), dtype=float)

    def field_matrix(self, dim: int) -> Array | None:
        """Constant field B_kj = d_k a_j - d_j a_k for linear potentials."""
        if self.linear_matrix is None:
            return None
        A = np.asarray(self.linear_matrix, dtype=float)
        if A.shape != (dim, dim):
            raise ValueError(f"linear gauge matrix has shape {A.shape}, expected {(dim, dim)}")
        return A.T - A


def zero_gauge(dim: int) -> VectorPotential:
    return VectorPotential(name="zero",
                           func=lambda p: np.zeros_like(p),
                           linear_matrix=np.zeros((dim, dim)))


def linear_gauge(matrix: Sequence[Sequence[float]], name: str = "linear") -> VectorPotential:
    A = np.asarray(matrix, dtype=float)
    return VectorPotential(name=name, func=lambda p: p @ A.T, linear_matrix=A)


def symmetric_gauge() -> VectorPotential:
    """a(x1, x2) = (-x2, x1) / 2; constant unit field B_12 = 1."""
    return linear_gauge([[0.0, -0.5], [0.5, 0.0]], name="symmetric")


def landau_gauge() -> VectorPotential:
    """a(x1, x2) = (-x2, 0); same field as the symmetric gauge."""
    return linear_gauge([[0.0, -1.0], [0.0, 0.0]], name="landau")


@dataclass(frozen=True)
class ScalarPotential:
    """External potential V: R^d -> R with polynomial-degree metadata."""

    name: str
    func: Callable[[Array], Array]
    degree: int

    def __call__(self, points: Array) -> Array:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.func(pts), dtype=float)


def harmonic_potential() -> ScalarPotential:
    return ScalarPotential("harmonic", lambda p: np.sum(p * p, axis=1), degree=2)


def quartic_potential() -> ScalarPotential:
    return ScalarPotential("quartic", lambda p: np.sum(p * p, axis=1) ** 2, degree=4)


def polynomial_potential(coeffs: Sequence[float], dim: int = 1) -> ScalarPotential:
    """V = sum_k c_k x^k in d=1; radial even polynomial sum_k c_k |x|^k in d=2."""
    c = np.asarray(coeffs, dtype=float)
    if dim == 2 and any(c[k] != 0.0 for k in range(1, len(c), 2)):
        raise ValueError("d=2 polynomial potentials must use even powers of |x| only")

    def v(p: Array) -> Array:
        r = p[:, 0] if dim == 1 else np.sqrt(np.sum(p * p, axis=1))
        return sum(ck * r ** k for k, ck in enumerate(c))

    degree = int(max((k for k, ck in enumerate(c) if ck != 0.0), default=0))
    return ScalarPotential(f"poly{list(c)}", v, degree=degree)


def zero_potential() -> ScalarPotential:
    return ScalarPotential("zero", lambda p: np.zeros(p.shape[0]), degree=0)


@dataclass(frozen=True)
class Interaction:
    """Even pair potential W with optional closed-form Fourier-moment metadata."""

    name: str
    func: Callable[[Array], Array]
    moment_closed_form: Callable[[int], float] | None = None

    def __call__(self, points: Array) -> Array:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.func(pts), dtype=float)


def gaussian_interaction(amplitude: float = 1.0, width: float = 1.0) -> Interaction:
    """W(y) = A exp(-|y|^2 / (2 s^2)); (1+|p|^2)-moment is A (1 + d/s^2)."""
    a, s = float(amplitude), float(width)

    def w(p: Array) -> Array:
        return a * np.exp(-np.sum(p * p, axis=1) / (2.0 * s * s))

    return Interaction(f"gaussian(A={a},s={s})", w,
                       moment_closed_form=lambda dim: abs(a) * (1.0 + dim / s ** 2))


def site_mass_interaction(mass: float, grid: Grid) -> Interaction:
    """Single-site mass w0 h^{-d} at y = 0 (delta-like on the given grid)."""
    w0, h, d = float(mass), grid.spacing, grid.dim

    def w(p: Array) -> Array:
        on_origin = np.all(np.abs(p) < h / 2.0, axis=1)
        return np.where(on_origin, w0 / h ** d, 0.0)

    return Interaction(f"site-mass({w0})", w)


def zero_interaction() -> Interaction:
    return Interaction("zero", lambda p: np.zeros(p.shape[0]),
                       moment_closed_form=lambda dim: 0.0)


@dataclass(frozen=True)
class FieldSpec:
    """Bundle of vector potential, scalar potential, and pair interaction."""

    vector_potential: VectorPotential
    scalar_potential: ScalarPotential
    interaction: Interaction | None = None

    def validate_on(self, grid: Grid) -> None:
        """Check finiteness of V and evenness of W on the sampled lattice."""
        v = self.scalar_potential(grid.sites())
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            site = grid.sites()[bad[0]]
            raise ValueError(f"scalar potential non-finite at site {site} (index {bad[0]})")
        if self.interaction is not None:
            diffs = difference_vectors(grid)
            w = self.interaction(diffs)
            w_rev = self.interaction(-diffs)
            if not np.allclose(w, w_rev, rtol=0, atol=1e-12 * max(1.0, np.abs(w).max())):
                raise ValueError("interaction potential is not even on sampled differences")


def difference_vectors(grid: Grid) -> Array:
    """The (2M-1)^d difference lattice x_k - x_m, row-major, shape (n, dim)."""
    M, h = grid.points_per_axis, grid.spacing
    y = h * np.arange(-(M - 1), M)
    if grid.dim == 1:
        return y[:, None]
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    return np.column_stack([Y1.ravel(), Y2.ravel()])


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HermitianOperator:
    """Dense self-adjoint matrix in the site (or truncated-mode) basis."""

    entries: Array
    hermitian_tolerance: float

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def hermitian(entries: Array) -> HermitianOperator:
    """Symmetrize exactly and record the pre-symmetrization deviation."""
    A = np.asarray(entries)
    dev = float(np.abs(A - A.conj().T).max())
    scale = float(np.abs(A).max())
    if scale > 0 and dev > HERMITICITY_RTOL * scale:
        raise ValueError(f"matrix is not Hermitian: max deviation {dev:.3e} vs scale {scale:.3e}")
    sym = (A + A.conj().T) / 2.0
    if np.iscomplexobj(sym) and np.abs(sym.imag).max() == 0.0:
        sym = sym.real
    return HermitianOperator(entries=sym, hermitian_tolerance=dev)


@dataclass(frozen=True)
class DiagonalOperator:
    """Diagonal operator stored by its diagonal (multiplication operators,
    plane waves); kept separate so commutator code can exploit the structure."""

    values: Array

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def as_matrix(self) -> Array:
        return np.diag(self.values)


OperatorLike = HermitianOperator | DiagonalOperator | Array


def as_matrix(op: OperatorLike) -> Array:
    if isinstance(op, HermitianOperator):
        return op.entries
    if isinstance(op, DiagonalOperator):
        return op.as_matrix()
    return np.asarray(op)


def _forward_difference_coeffs(grid: Grid, hbar: float, b: float,
                               a_on_links: Array) -> tuple[Array, Array]:
    """Per-link coefficients (alpha_plus, alpha_minus) of Pj+ = -i hbar Dj+ - b a(mid) S.

    On link l with endpoints s- and s+:  (Pj+ u)_l = alpha_plus u_{s+} + alpha_minus u_{s-}.
    """
    h = grid.spacing
    alpha_plus = -1j * hbar / h - b * a_on_links / 2.0
    alpha_minus = 1j * hbar / h - b * a_on_links / 2.0
    return alpha_plus, alpha_minus


def assemble_hamiltonian(grid: Grid, fields: FieldSpec, hbar: float, b: float) -> HermitianOperator:
    """H = sum_j (Pj+)^dag Pj+ + diag(V) on the Dirichlet lattice."""
    if not (np.isfinite(hbar) and hbar > 0):
        raise ValueError(f"hbar must be positive and finite, got {hbar}")
    if not (np.isfinite(b) and b >= 0):
        raise ValueError(f"b must be nonnegative and finite, got {b}")
    fields.validate_on(grid)

    M, d, n = grid.points_per_axis, grid.dim, grid.n_sites
    x = grid.axis_coords()
    mid = grid.link_midpoints()
    magnetic = b != 0.0 and fields.vector_potential.name != "zero"
    dtype = complex if magnetic else float
    H = np.zeros((n, n), dtype=dtype)

    for axis in range(d):
        # Link coordinates: along `axis` use midpoints, transverse use sites.
        if d == 1:
            link_pts = mid[:, None]
            n_trans = 1
        elif axis == 0:
            Pm, Pt = np.meshgrid(mid, x, indexing="ij")
            link_pts = np.column_stack([Pm.ravel(), Pt.ravel()])
            n_trans = M
        else:
            Pm, Pt = np.meshgrid(mid, x, indexing="ij")  # (l, t) ordering
            link_pts = np.column_stack([Pt.ravel(), Pm.ravel()])
            n_trans = M
        a_links = fields.vector_potential(link_pts)[:, axis] if magnetic else np.zeros(len(link_pts))
        ap, am = _forward_difference_coeffs(grid, hbar, b, a_links)
        if not magnetic:
            ap = ap.astype(complex)
            am = am.astype(complex)

        # Enumerate links as (l, t) with l in 0..M along `axis`, t transverse.
        # Site index of endpoint at axis-position j, transverse t:
        stride = M if (d == 2 and axis == 0) else 1
        t_stride = 1 if (d == 2 and axis == 0) else (M if d == 2 else 0)
        l_idx, t_idx = np.meshgrid(np.arange(M + 1), np.arange(n_trans), indexing="ij")
        flat = (l_idx * n_trans + t_idx).ravel()
        lv, tv = l_idx.ravel(), t_idx.ravel()
        ap_f, am_f = ap[flat], am[flat]

        sp = lv * stride + tv * t_stride          # site at axis-position l ("s+")
        sm = (lv - 1) * stride + tv * t_stride    # site at axis-position l-1 ("s-")
        has_p, has_m = lv <= M - 1, lv >= 1

        w = np.abs(ap_f[has_p]) ** 2
        np.add.at(H, (sp[has_p], sp[has_p]), w.astype(dtype))
        w = np.abs(am_f[has_m]) ** 2
        np.add.at(H, (sm[has_m], sm[has_m]), w.astype(dtype))
        both = has_p & has_m
        cross = np.conj(ap_f[both]) * am_f[both]
        np.add.at(H, (sp[both], sm[both]), cross if magnetic else cross.real)
        np.add.at(H, (sm[both], sp[both]), np.conj(cross) if magnetic else cross.real)

    H[np.diag_indices(n)] += fields.scalar_potential(grid.sites())
    return hermitian(H)


def momentum_operator(grid: Grid, fields: FieldSpec, hbar: float, b: float, j: int) -> HermitianOperator:
    """Observable magnetic momentum P_j = -i hbar D_j^central - b a_j(x), j in 1..dim."""
    if not 1 <= j <= grid.dim:
        raise ValueError(f"component j must be in 1..{grid.dim}, got {j}")
    M, n = grid.points_per_axis, grid.n_sites
    h = grid.spacing
    C = np.zeros((M, M))
    idx = np.arange(M - 1)
    C[idx, idx + 1] = 1.0 / (2.0 * h)
    C[idx + 1, idx] = -1.0 / (2.0 * h)
    if grid.dim == 1:
        D = C
    elif j == 1:
        D = np.kron(C, np.eye(M))
    else:
        D = np.kron(np.eye(M), C)
    P = -1j * hbar * D
    if b != 0.0:
        P = P - b * np.diag(fields.vector_potential(grid.sites())[:, j - 1])
    return hermitian(P)


def multiplication_operator(grid: Grid, f: Callable[[Array], Array] | Array) -> DiagonalOperator:
    """diag(f(x_k)); rejects non-finite samples."""
    vals = np.asarray(f(grid.sites()) if callable(f) else f, dtype=float)
    if vals.shape != (grid.n_sites,):
        raise ValueError(f"expected {grid.n_sites} samples, got shape {vals.shape}")
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise ValueError(f"non-finite sample at site index {bad[0]} ({grid.sites()[bad[0]]})")
    return DiagonalOperator(values=vals)


def position_power_operator(grid: Grid, beta: Sequence[int]) -> DiagonalOperator:
    """Monomial observable x^beta = prod_j x_j^beta_j as a diagonal operator."""
    beta = tuple(int(bj) for bj in beta)
    if len(beta) != grid.dim or any(bj < 0 for bj in beta):
        raise ValueError(f"beta must be {grid.dim} nonnegative integers, got {beta}")
    pts = grid.sites()
    vals = np.ones(grid.n_sites)
    for ax, bj in enumerate(beta):
        if bj:
            vals = vals * pts[:, ax] ** bj
    return DiagonalOperator(values=vals)


def plane_wave_operator(grid: Grid, alpha: Sequence[float]) -> DiagonalOperator:
    """Unitary diagonal operator diag(e^{i alpha . x_k})."""
    a = np.asarray(alpha, dtype=float).reshape(-1)
    if a.shape != (grid.dim,) or not np.all(np.isfinite(a)):
        raise ValueError(f"alpha must be {grid.dim} finite reals, got {alpha}")
    phases = grid.sites() @ a
    return DiagonalOperator(values=np.exp(1j * phases))
