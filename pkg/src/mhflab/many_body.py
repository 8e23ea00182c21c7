"""Exact N-fermion dynamics in a truncated mode space, reduced density
matrices, and the Hartree-Fock validity comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .lattice import FieldSpec, Grid, assemble_hamiltonian
from .hartree_fock import interaction_tables, midpoint_step_orbitals
from .spectra import DensityMatrix, SpectralDecomposition, eigendecompose

Array = np.ndarray

DIMENSION_CAP = 5000
MODE_GAP = 1e-9


# ---------------------------------------------------------------------------
# Mode basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeBasis:
    """Lowest-K eigenvectors of the non-interacting one-body operator."""

    vectors: Array           # (n_sites, K), orthonormal columns
    energies: Array          # (K,)
    grid: Grid
    hbar: float
    b: float

    @property
    def n_modes(self) -> int:
        return self.vectors.shape[1]


def build_mode_basis(grid: Grid, fields: FieldSpec, hbar: float, b: float, K: int,
                     decomp: SpectralDecomposition | None = None) -> ModeBasis:
    if not 1 <= K <= grid.n_sites:
        raise ValueError(f"K must be in 1..{grid.n_sites}, got {K}")
    if decomp is None:
        decomp = eigendecompose(assemble_hamiltonian(grid, fields, hbar, b))
    lam = decomp.eigenvalues
    if K < grid.n_sites and lam[K] - lam[K - 1] < MODE_GAP:
        raise ValueError(
            f"degenerate cut: lambda_{K} = lambda_{K + 1} = {lam[K - 1]:.12g}; choose a different K")
    gram_dev = float(np.abs(decomp.eigenvectors[:, :K].conj().T @ decomp.eigenvectors[:, :K]
                            - np.eye(K)).max())
    if gram_dev > 1e-10:
        raise RuntimeError(f"mode Gram matrix deviates from identity by {gram_dev:.3e}")
    return ModeBasis(vectors=decomp.eigenvectors[:, :K], energies=lam[:K].copy(),
                     grid=grid, hbar=hbar, b=b)


# ---------------------------------------------------------------------------
# Occupation-number basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FockBasis:
    """All K-bit masks with popcount N, ascending (lexicographic over
    occupations); signs fixed by ascending-mode creation order."""

    n_modes: int
    n_particles: int
    masks: Array                     # int64, sorted ascending
    index: dict[int, int]

    @property
    def dimension(self) -> int:
        return self.masks.shape[0]


def fock_basis(n_modes: int, n_particles: int) -> FockBasis:
    if not 0 <= n_particles <= n_modes:
        raise ValueError(f"need 0 <= N <= K, got N={n_particles}, K={n_modes}")
    dim = math.comb(n_modes, n_particles)
    if dim > DIMENSION_CAP:
        raise ValueError(f"Fock dimension C({n_modes},{n_particles}) = {dim} exceeds cap {DIMENSION_CAP}")
    masks = np.sort(np.array([sum(1 << i for i in combo)
                              for combo in combinations(range(n_modes), n_particles)], dtype=np.int64))
    return FockBasis(n_modes=n_modes, n_particles=n_particles, masks=masks,
                     index={int(m): i for i, m in enumerate(masks)})


def _parity_below(mask: int, mode: int) -> int:
    """(-1)^{# occupied modes with index < mode}."""
    return -1 if bin(mask & ((1 << mode) - 1)).count("1") % 2 else 1


def annihilate(mask: int, mode: int) -> tuple[int, int]:
    """a_mode |mask> -> (sign, new_mask); sign 0 if the mode is empty."""
    if not (mask >> mode) & 1:
        return 0, mask
    return _parity_below(mask, mode), mask & ~(1 << mode)


def create(mask: int, mode: int) -> tuple[int, int]:
    """a^dag_mode |mask> -> (sign, new_mask); sign 0 if already occupied."""
    if (mask >> mode) & 1:
        return 0, mask
    return _parity_below(mask, mode), mask | (1 << mode)


# ---------------------------------------------------------------------------
# Many-body Hamiltonian
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManyBodyHamiltonian:
    matrix: Array
    basis: FockBasis
    modes: ModeBasis
    one_body: Array                  # K x K projected one-body operator
    pair_tensor: Array               # V[i,k,j,l] = <ij|W|kl>
    coupling: float
    canonical_scaling: bool          # lam == 1/N and hbar == N^{-1/d}


def pair_interaction_tensor(modes: ModeBasis, fields: FieldSpec) -> Array:
    """V[i,k,j,l] = <ij|W|kl> by double grid sums; Euclidean-normalized mode
    vectors make the h^d factors cancel against the kernel normalization."""
    K = modes.n_modes
    wmat = interaction_tables(fields.interaction, modes.grid).matrix
    phi = modes.vectors
    B = np.einsum("ai,ak->ika", phi.conj(), phi).reshape(K * K, -1)
    G = B @ wmat @ B.T
    return G.reshape(K, K, K, K)     # [i,k,j,l]


def assemble_many_body_hamiltonian(modes: ModeBasis, fields: FieldSpec, hbar: float,
                                   b: float, N: int,
                                   coupling: float | None = None) -> ManyBodyHamiltonian:
    """One-body part <i|H|j> plus the mean-field-scaled pair interaction with
    antisymmetrized elements <ij|W|kl> - <ij|W|lk>."""
    if hbar != modes.hbar or b != modes.b:
        raise ValueError("hbar/b must match the mode basis (identical truncation for both solvers)")
    basis = fock_basis(modes.n_modes, N)
    K = modes.n_modes
    h0 = assemble_hamiltonian(modes.grid, fields, hbar, b).entries
    hmat = modes.vectors.conj().T @ h0 @ modes.vectors
    hmat = (hmat + hmat.conj().T) / 2.0

    lam = 1.0 / N if coupling is None else float(coupling)
    canonical = coupling is None and abs(hbar - N ** (-1.0 / modes.grid.dim)) < 1e-12
    tensor = (pair_interaction_tensor(modes, fields) if fields.interaction is not None
              else np.zeros((K, K, K, K)))

    dim = basis.dimension
    H = np.zeros((dim, dim), dtype=complex if np.iscomplexobj(hmat) else float)
    occupied = [[i for i in range(K) if (int(m) >> i) & 1] for m in basis.masks]

    for col, m in enumerate(basis.masks):
        m = int(m)
        occ = occupied[col]
        # one-body: a^dag_i a_j over occupied j
        for j in occ:
            s1, m1 = annihilate(m, j)
            for i in range(K):
                if hmat[i, j] == 0.0 and i != j:
                    continue
                s2, m2 = create(m1, i)
                if s2:
                    H[basis.index[m2], col] += s1 * s2 * hmat[i, j]
        # two-body: sum_{i<j, k<l} (V_ijkl - V_ijlk) a^dag_i a^dag_j a_l a_k
        if fields.interaction is not None:
            for a_pos in range(len(occ)):
                for b_pos in range(a_pos + 1, len(occ)):
                    k, l = occ[a_pos], occ[b_pos]
                    sk, mk = annihilate(m, k)
                    sl, ml = annihilate(mk, l)
                    hole_sign = sk * sl
                    free = [i for i in range(K) if not (ml >> i) & 1]
                    for ii in range(len(free)):
                        for jj in range(ii + 1, len(free)):
                            i, j = free[ii], free[jj]
                            sj, mj = create(ml, j)
                            si, mf = create(mj, i)
                            elem = tensor[i, k, j, l] - tensor[i, l, j, k]
                            if elem != 0.0:
                                H[basis.index[mf], col] += lam * hole_sign * sj * si * elem
    H = (H + H.conj().T) / 2.0
    return ManyBodyHamiltonian(matrix=H, basis=basis, modes=modes, one_body=hmat,
                               pair_tensor=tensor, coupling=lam, canonical_scaling=canonical)


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManyBodyState:
    coefficients: Array
    basis: FockBasis

    def __post_init__(self):
        nrm = float(np.linalg.norm(self.coefficients))
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError(f"state norm {nrm} deviates from 1 beyond 1e-9")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))


def slater_state(basis: FockBasis, occupied: Sequence[int] | None = None,
                 orbital_matrix: Array | None = None,
                 modes: ModeBasis | None = None) -> ManyBodyState:
    """Slater determinant: either a single occupation (basis element) or the
    determinant expansion of N orthonormal grid orbitals in the mode space."""
    N = basis.n_particles
    if occupied is not None:
        occ = sorted(int(i) for i in occupied)
        if len(set(occ)) != N:
            raise ValueError(f"need {N} distinct modes, got {occupied}")
        if occ and (occ[0] < 0 or occ[-1] >= basis.n_modes):
            raise ValueError(f"mode indices out of range 0..{basis.n_modes - 1}: {occupied}")
        mask = sum(1 << i for i in occ)
        coeff = np.zeros(basis.dimension)
        coeff[basis.index[mask]] = 1.0
        return ManyBodyState(coefficients=coeff, basis=basis)

    if orbital_matrix is None or modes is None:
        raise ValueError("provide either occupied mode indices or (orbital_matrix, modes)")
    orb = np.asarray(orbital_matrix)
    if orb.shape != (modes.grid.n_sites, N):
        raise ValueError(f"orbital matrix must be n_sites x N = {(modes.grid.n_sites, N)}")
    C = modes.vectors.conj().T @ orb
    residual = float(np.linalg.norm(orb - modes.vectors @ C))
    if residual > 1e-6:
        raise ValueError(f"orbitals leave the mode space: projection error {residual:.3e}")
    coeff = np.zeros(basis.dimension, dtype=complex)
    for pos, m in enumerate(basis.masks):
        rows = [i for i in range(basis.n_modes) if (int(m) >> i) & 1]
        coeff[pos] = np.linalg.det(C[rows, :])
    nrm = np.linalg.norm(coeff)
    if abs(nrm - 1.0) > 1e-6:
        raise ValueError(f"determinant expansion norm {nrm} (orbitals not orthonormal?)")
    return ManyBodyState(coefficients=coeff / nrm, basis=basis)


def evolve_many_body(psi: ManyBodyState, hamiltonian: ManyBodyHamiltonian,
                     times: Sequence[float], hbar: float) -> list[ManyBodyState]:
    """psi(t) = exp(-i t H / hbar) psi via the full eigendecomposition."""
    if hamiltonian.basis is not psi.basis and not np.array_equal(
            hamiltonian.basis.masks, psi.basis.masks):
        raise ValueError("state and Hamiltonian live on different Fock bases")
    decomp = eigendecompose(hamiltonian.matrix)
    v = decomp.eigenvectors
    amplitudes = v.conj().T @ psi.coefficients
    out = []
    for t in times:
        coeff = v @ (np.exp(-1j * decomp.eigenvalues * t / hbar) * amplitudes)
        out.append(ManyBodyState(coefficients=coeff, basis=psi.basis))
    return out


def one_particle_rdm(psi: ManyBodyState) -> DensityMatrix:
    """gamma_ij = <psi, a^dag_j a_i psi>; Hermitian, 0 <= gamma <= 1, trace N."""
    basis = psi.basis
    K = basis.n_modes
    gamma = np.zeros((K, K), dtype=complex)
    for col, m in enumerate(basis.masks):
        m = int(m)
        c = psi.coefficients[col]
        if c == 0.0:
            continue
        for i in range(K):                  # a_i
            s1, m1 = annihilate(m, i)
            if not s1:
                continue
            for j in range(K):              # a^dag_j
                s2, m2 = create(m1, j)
                if s2:
                    gamma[i, j] += np.conj(psi.coefficients[basis.index[m2]]) * s1 * s2 * c
    gamma = (gamma + gamma.conj().T) / 2.0
    return DensityMatrix(entries=gamma)


# ---------------------------------------------------------------------------
# Hartree-Fock in the same mode space, and the mean-field validity comparison
# ---------------------------------------------------------------------------

def hf_mode_space_hamiltonian(omega: Array, one_body: Array, tensor: Array,
                              coupling: float) -> Array:
    """Galerkin projection of H + W*rho - X onto the mode space:
    h(w)_ik = h_ik + lam * sum_jl w_lj (V[i,k,j,l] - V[i,l,j,k])."""
    direct = np.einsum("ikjl,lj->ik", tensor, omega)
    exchange = np.einsum("iljk,lj->ik", tensor, omega)
    h = one_body + coupling * (direct - exchange)
    return (h + h.conj().T) / 2.0


@dataclass(frozen=True)
class ComparisonRow:
    N: int
    time: float
    trace_error: float
    hs_error: float
    trace_reference: float           # ||omega||_1 = N
    hs_reference: float              # ||omega||_2 = sqrt(N)


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]
    canonical_scaling: bool
    hs_small: bool                   # hs_error <= 0.2 sqrt(N) at final time, all N
    decreasing_in_N: bool            # hs_error strictly decreasing in N at final time

    def final_errors(self) -> list[tuple[int, float]]:
        t_final = max(r.time for r in self.rows)
        return sorted((r.N, r.hs_error) for r in self.rows if r.time == t_final)


def compare_hf_vs_exact(grid: Grid, fields: FieldSpec, b: float, N_list: Sequence[int],
                        K: int, T: float, checkpoints: Sequence[float], dt: float = 0.005,
                        hbar_override: float | None = None,
                        coupling_override: float | None = None) -> ComparisonTable:
    """Exact many-body vs Hartree-Fock one-particle density matrices in one
    shared K-mode truncation, at the mean-field coupling lam = 1/N and
    hbar = N^{-1/d} (overridable; overrides are flagged as non-canonical scaling)."""
    if max(checkpoints) > T + 1e-12:
        raise ValueError("checkpoints must lie within [0, T]")
    rows: list[ComparisonRow] = []
    canonical = hbar_override is None and coupling_override is None
    for N in N_list:
        hbar = hbar_override if hbar_override is not None else N ** (-1.0 / grid.dim)
        modes = build_mode_basis(grid, fields, hbar, b, K)
        hmb = assemble_many_body_hamiltonian(modes, fields, hbar, b, N,
                                             coupling=coupling_override)
        psi0 = slater_state(hmb.basis, occupied=range(N))
        exact_states = evolve_many_body(psi0, hmb, list(checkpoints), hbar)

        # HF trajectory on the identical truncation
        n_steps = int(round(T / dt))
        orbitals = np.eye(K, N, dtype=complex)
        h_of = lambda om: hf_mode_space_hamiltonian(om, hmb.one_body, hmb.pair_tensor,
                                                    hmb.coupling)
        snap_idx = {int(round(t / dt)): t for t in checkpoints}
        if any(abs(k * dt - t) > 1e-9 for k, t in snap_idx.items()):
            raise ValueError("checkpoints must be multiples of dt")
        hf_at: dict[float, Array] = {}
        for step in range(n_steps + 1):
            if step in snap_idx:
                hf_at[snap_idx[step]] = orbitals @ orbitals.conj().T
            if step < n_steps:
                orbitals = midpoint_step_orbitals(orbitals, dt, hbar, h_of)

        for t, psi_t in zip(checkpoints, exact_states):
            gamma = one_particle_rdm(psi_t).entries
            diff = gamma - hf_at[t]
            sv = np.linalg.svd(diff, compute_uv=False)
            rows.append(ComparisonRow(N=N, time=float(t), trace_error=float(sv.sum()),
                                      hs_error=float(np.sqrt((sv ** 2).sum())),
                                      trace_reference=float(N),
                                      hs_reference=math.sqrt(N)))
    table = ComparisonTable(rows=tuple(rows), canonical_scaling=canonical,
                            hs_small=False, decreasing_in_N=False)
    t_final = max(r.time for r in rows)
    finals = sorted((r.N, r.hs_error) for r in rows if r.time == t_final)
    hs_small = all(err <= 0.2 * math.sqrt(n) for n, err in finals)
    decreasing = all(finals[i][1] > finals[i + 1][1] for i in range(len(finals) - 1))
    return ComparisonTable(rows=tuple(rows), canonical_scaling=canonical,
                           hs_small=hs_small, decreasing_in_N=decreasing)
