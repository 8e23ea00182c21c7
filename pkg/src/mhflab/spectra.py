"""Eigendecompositions, spectral projectors, Schatten norms, and the
spectral-theory diagnostic suite (Weyl law, CLR bound, Agmon decay,
diamagnetic ordering)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import (
    FieldSpec,
    Grid,
    HermitianOperator,
    OperatorLike,
    as_matrix,
    assemble_hamiltonian,
    hermitian,
)

Array = np.ndarray

EIGEN_RESIDUAL_RTOL = 1e-8
UNITARITY_TOL = 1e-10
PROJECTOR_TOL = 1e-10
DEGENERACY_GAP = 1e-9


class DegenerateThresholdError(ValueError):
    """Raised when a spectral threshold collides with an eigenvalue."""


@dataclass(frozen=True)
class SpectralDecomposition:
    """Full eigensystem: ascending eigenvalues, unitary eigenvector columns."""

    eigenvalues: Array
    eigenvectors: Array

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def operator_norm(self) -> float:
        return float(np.abs(self.eigenvalues).max())


def eigendecompose(H: OperatorLike) -> SpectralDecomposition:
    """Dense Hermitian eigendecomposition with residual and unitarity checks."""
    A = as_matrix(H)
    try:
        w, v = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(
            f"eigensolver failed on size-{A.shape[0]} matrix "
            f"(norm ~ {np.abs(A).max():.3e}): {exc}"
        ) from exc
    op_norm = float(np.abs(w).max()) if w.size else 0.0
    resid = np.linalg.norm(A @ v - v * w, axis=0)
    bound = EIGEN_RESIDUAL_RTOL * (np.abs(w) + op_norm)
    if np.any(resid > np.maximum(bound, 1e-300)):
        k = int(np.argmax(resid - bound))
        raise RuntimeError(
            f"eigenpair residual {resid[k]:.3e} exceeds {bound[k]:.3e} at index {k} "
            f"(condition report: size={A.shape[0]}, op_norm={op_norm:.3e})"
        )
    gram_dev = float(np.abs(v.conj().T @ v - np.eye(A.shape[0])).max())
    if gram_dev > UNITARITY_TOL:
        raise RuntimeError(f"eigenvector matrix not unitary: deviation {gram_dev:.3e}")
    return SpectralDecomposition(eigenvalues=w, eigenvectors=v)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian matrix with 0 <= gamma <= 1; projectors carry their range basis."""

    entries: Array
    orbital_basis: Array | None = None  # orthonormal columns spanning the range (projectors)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def particle_count(self) -> float:
        return float(np.trace(self.entries).real)

    @property
    def rank(self) -> int | None:
        return None if self.orbital_basis is None else self.orbital_basis.shape[1]

    def validate(self, projector: bool = False, tol: float = PROJECTOR_TOL) -> None:
        A = self.entries
        herm_dev = float(np.abs(A - A.conj().T).max())
        if herm_dev > 1e-12 * max(1.0, float(np.abs(A).max())):
            raise ValueError(f"density matrix not Hermitian: deviation {herm_dev:.3e}")
        ev = np.linalg.eigvalsh(A)
        if ev.min() < -tol or ev.max() > 1.0 + tol:
            raise ValueError(f"density matrix spectrum [{ev.min():.3e}, {ev.max():.3e}] outside [0, 1]")
        if projector:
            idem = float(np.abs(A @ A - A).max())
            if idem > tol:
                raise ValueError(f"projector not idempotent: ||g^2-g|| = {idem:.3e}")


def spectral_projector(decomp: SpectralDecomposition, mu: float) -> DensityMatrix:
    """Pi = sum_{lambda_n <= mu} v_n v_n^dag."""
    if not np.isfinite(mu):
        raise ValueError(f"mu must be finite, got {mu}")
    gaps = np.abs(decomp.eigenvalues - mu)
    k = int(np.argmin(gaps))
    if gaps[k] < DEGENERACY_GAP:
        raise DegenerateThresholdError(
            f"mu = {mu} collides with eigenvalue {decomp.eigenvalues[k]} (index {k}); "
            "move the threshold off the spectrum"
        )
    occ = decomp.eigenvalues <= mu
    V = decomp.eigenvectors[:, occ]
    return DensityMatrix(entries=V @ V.conj().T, orbital_basis=V)


def chemical_potential_for_rank(decomp: SpectralDecomposition, N: int) -> float:
    """Midpoint threshold so the spectral projector has rank exactly N."""
    M = decomp.size
    if not 1 <= N <= M:
        raise ValueError(f"rank N must be in 1..{M}, got {N}")
    lam = decomp.eigenvalues
    if N == M:
        return float(lam[-1] + 1.0)
    if lam[N] - lam[N - 1] < DEGENERACY_GAP:
        raise DegenerateThresholdError(
            f"degenerate level lambda_{N} = lambda_{N+1} = {lam[N - 1]:.12g}; "
            "choose a different N"
        )
    return float((lam[N - 1] + lam[N]) / 2.0)


def schatten_norm(A: OperatorLike | Sequence[OperatorLike], p: float) -> float:
    """Schatten norm: p=1 trace norm, p=2 Hilbert-Schmidt, p=inf operator norm.

    Tuples of operators combine in the l^2 sense.
    """
    if isinstance(A, (list, tuple)):
        return float(math.sqrt(sum(schatten_norm(a, p) ** 2 for a in A)))
    mat = as_matrix(A)
    if p == 2:
        return float(np.linalg.norm(mat))
    sv = np.linalg.svd(mat, compute_uv=False)
    if p == 1:
        return float(sv.sum())
    if p == np.inf:
        return float(sv[0]) if sv.size else 0.0
    raise ValueError(f"p must be 1, 2, or inf, got {p}")


def operator_function(decomp: SpectralDecomposition, f: Callable[[Array], Array]) -> HermitianOperator:
    """Continuous functional calculus sum f(lambda_n) v_n v_n^dag."""
    fw = np.asarray(f(decomp.eigenvalues))
    if not np.all(np.isfinite(fw)):
        raise ValueError("f is non-finite on part of the spectrum")
    V = decomp.eigenvectors
    return hermitian((V * fw) @ V.conj().T)


# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------

def trapezoid_weights(grid: Grid) -> Array:
    """Product trapezoid weights over sites; sums to (2L)^d as h -> 0."""
    M, h = grid.points_per_axis, grid.spacing
    w1 = np.full(M, h)
    w1[0] = w1[-1] = h / 2.0
    if grid.dim == 1:
        return w1
    return np.outer(w1, w1).ravel()


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# Weyl law
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeylReport:
    quantum_count: float
    classical_count: float
    hbar: float
    b: float
    mu: float
    relative_error: float
    boundary_warning: bool


def weyl_law_compare(grid: Grid, fields: FieldSpec, hbar: float, b: float, mu: float,
                     phi: Callable[[Array], Array] | Array | None = None,
                     decomp: SpectralDecomposition | None = None) -> WeylReport:
    """Compare tr(phi Pi_mu) with the closed-form semiclassical phase-space count
    (2 pi hbar)^{-d} omega_d int phi (mu - V)_+^{d/2} dx."""
    sites = grid.sites()
    phi_vals = np.ones(grid.n_sites) if phi is None else (
        np.asarray(phi(sites), dtype=float) if callable(phi) else np.asarray(phi, dtype=float))
    if phi_vals.min() < 0:
        raise ValueError("phi must be nonnegative")
    if decomp is None:
        decomp = eigendecompose(assemble_hamiltonian(grid, fields, hbar, b))
    proj = spectral_projector(decomp, mu)
    quantum = float(np.sum(phi_vals * np.diag(proj.entries).real))

    v = fields.scalar_potential(sites)
    pos = np.clip(mu - v, 0.0, None)
    d = grid.dim
    integrand = phi_vals * pos ** (d / 2.0)
    classical = (2.0 * math.pi * hbar) ** (-d) * unit_ball_volume(d) * float(
        np.sum(trapezoid_weights(grid) * integrand))
    boundary_warning = bool(np.any(pos[~grid.interior_mask(1)] > 0.0))
    rel = abs(quantum - classical) / max(classical, 1.0)
    return WeylReport(quantum_count=quantum, classical_count=classical, hbar=hbar,
                      b=b, mu=mu, relative_error=rel, boundary_warning=boundary_warning)


# ---------------------------------------------------------------------------
# CLR bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CLRReport:
    lhs_count: int
    rhs_bound: float
    holds: bool
    hbar: float
    b: float
    mu: float
    eps: float


def clr_bound_check(grid: Grid, fields: FieldSpec, hbar: float, b: float, mu: float,
                    eps: float, decomp: SpectralDecomposition | None = None) -> CLRReport:
    """Magnetic Cwikel-Lieb-Rosenblum count bound with its explicit constant:

        #{lambda_n <= mu + eps/4}
            <= hbar^{-d} * 4 eps^{-d/2-1} / ((4 pi)^{d/2} Gamma(d/2+1))
               * int (V - mu - 3 eps/8)_-^{d/2+1} dx

    The right-hand side is independent of the magnetic field.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if decomp is None:
        decomp = eigendecompose(assemble_hamiltonian(grid, fields, hbar, b))
    lhs = int(np.sum(decomp.eigenvalues <= mu + eps / 4.0))

    d = grid.dim
    v = fields.scalar_potential(grid.sites())
    neg_part = np.clip(mu + 3.0 * eps / 8.0 - v, 0.0, None)
    integral = float(np.sum(trapezoid_weights(grid) * neg_part ** (d / 2.0 + 1.0)))
    const = 4.0 * eps ** (-d / 2.0 - 1.0) / ((4.0 * math.pi) ** (d / 2.0) * math.gamma(d / 2.0 + 1.0))
    rhs = hbar ** (-d) * const * integral
    return CLRReport(lhs_count=lhs, rhs_bound=rhs, holds=lhs <= rhs,
                     hbar=hbar, b=b, mu=mu, eps=eps)


# ---------------------------------------------------------------------------
# Agmon decay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgmonReport:
    weighted_norms: Array
    max_weighted_norm: float
    n_eigenfunctions: int
    hbar: float
    mu: float
    eps: float


def _distance_to_set(points: Array, set_points: Array) -> Array:
    """Euclidean distance from each point to a finite point set (0 if inside)."""
    if set_points.shape[0] == 0:
        raise ValueError("region is empty")
    out = np.full(points.shape[0], np.inf)
    chunk = max(1, int(2e7) // max(set_points.shape[0], 1))
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        d2 = ((block[:, None, :] - set_points[None, :, :]) ** 2).sum(axis=2)
        out[start:start + chunk] = np.sqrt(d2.min(axis=1))
    return out


def agmon_decay_check(grid: Grid, fields: FieldSpec, decomp: SpectralDecomposition,
                      hbar: float, mu: float, eps: float,
                      u_region: Array | None = None) -> AgmonReport:
    """Weighted norms ||e^{phi_eps/hbar} psi_n|| for eigenvalues below mu + eps/4,
    with phi_eps(x) = eps * dist(x, U~) and U~ the unit enlargement of U."""
    sites = grid.sites()
    v = fields.scalar_potential(sites)
    classical = v - mu < eps
    if u_region is None:
        u_mask = classical
    else:
        u_mask = np.asarray(u_region, dtype=bool)
        if u_mask.shape != (grid.n_sites,):
            raise ValueError(f"u_region must be a mask over {grid.n_sites} sites")
        if np.any(classical & ~u_mask):
            raise ValueError("u_region must contain the classical region {V - mu < eps}")
    if not u_mask.any():
        raise ValueError("region U is empty: mu is below min V - eps on the grid")

    dist_u = _distance_to_set(sites, sites[u_mask])
    enlarged = dist_u < 1.0
    phi = eps * _distance_to_set(sites, sites[enlarged])

    below = decomp.eigenvalues < mu + eps / 4.0
    if not below.any():
        raise ValueError("no eigenvalues below mu + eps/4")
    psi = decomp.eigenvectors[:, below]
    weighted = np.linalg.norm(np.exp(phi / hbar)[:, None] * psi, axis=0)
    return AgmonReport(weighted_norms=weighted, max_weighted_norm=float(weighted.max()),
                       n_eigenfunctions=int(below.sum()), hbar=hbar, mu=mu, eps=eps)


# ---------------------------------------------------------------------------
# Diamagnetic ordering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiamagneticReport:
    ground_energy_b: float
    ground_energy_0: float
    tolerance: float
    c_grid: float
    holds: bool
    hbar: float
    b: float


def diamagnetic_check(grid: Grid, fields: FieldSpec, hbar: float, b: float,
                      c_grid: float = 1.0) -> DiamagneticReport:
    """Check lambda_1(H_{hbar,b}) >= lambda_1(H_{hbar,0}) - c_grid * h."""
    e_b = float(np.linalg.eigvalsh(assemble_hamiltonian(grid, fields, hbar, b).entries)[0])
    e_0 = float(np.linalg.eigvalsh(assemble_hamiltonian(grid, fields, hbar, 0.0).entries)[0])
    tol = c_grid * grid.spacing
    return DiamagneticReport(ground_energy_b=e_b, ground_energy_0=e_0, tolerance=tol,
                             c_grid=c_grid, holds=e_b >= e_0 - tol, hbar=hbar, b=b)
