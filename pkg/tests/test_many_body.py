"""Fock basis, many-body Hamiltonian (with first-quantized oracle), RDMs,
and the exact-vs-HF comparison machinery."""

from itertools import combinations

import numpy as np
import pytest

from mhflab.lattice import (
    FieldSpec,
    build_grid,
    assemble_hamiltonian,
    gaussian_interaction,
    harmonic_potential,
    zero_gauge,
)
from mhflab.hartree_fock import interaction_tables
from mhflab.many_body import (
    ManyBodyState,
    assemble_many_body_hamiltonian,
    build_mode_basis,
    compare_hf_vs_exact,
    evolve_many_body,
    fock_basis,
    one_particle_rdm,
    slater_state,
)


@pytest.fixture(scope="module")
def mb_setup():
    grid = build_grid(1, 121, 5.0)
    fields = FieldSpec(zero_gauge(1), harmonic_potential(), gaussian_interaction(1.0, 1.0))
    return grid, fields


def first_quantized_two_body(modes, fields, hbar, b, lam):
    """Independent N=2 oracle: antisymmetrized wavefunctions on the grid."""
    grid = modes.grid
    H0 = assemble_hamiltonian(grid, fields, hbar, b).entries
    Wmat = interaction_tables(fields.interaction, grid).matrix
    phi = modes.vectors
    pairs = list(combinations(range(modes.n_modes), 2))
    psis = [(np.outer(phi[:, i], phi[:, j]) - np.outer(phi[:, j], phi[:, i])) / np.sqrt(2)
            for i, j in pairs]

    def apply_h2(psi):
        return H0 @ psi + psi @ H0.T + lam * Wmat * psi

    out = np.zeros((len(pairs), len(pairs)), dtype=complex)
    for p, pp in enumerate(psis):
        for q, pq in enumerate(psis):
            out[p, q] = np.sum(np.conj(pp) * apply_h2(pq))
    return pairs, out


def test_mode_basis_examples(mb_setup):
    _, fields = mb_setup
    grid = build_grid(1, 301, 5.0)  # resolves the K=12 level at 1%
    modes = build_mode_basis(grid, fields, 0.2, 0.0, 12)
    assert np.abs(modes.vectors.conj().T @ modes.vectors - np.eye(12)).max() <= 1e-10
    exact = 0.2 * (2 * np.arange(12) + 1)
    assert np.all(np.abs(modes.energies - exact) / exact < 0.01)
    ground = modes.vectors[:, 0]
    assert np.all(np.abs(np.sign(ground[np.abs(ground) > 1e-8]).sum()) ==
                  np.sum(np.abs(ground) > 1e-8))  # node-free Perron ground state


def test_fock_basis_structure():
    basis = fock_basis(4, 2)
    assert basis.dimension == 6
    assert list(basis.masks) == sorted(basis.masks)
    assert basis.index[0b0011] == 0
    with pytest.raises(ValueError, match="cap"):
        fock_basis(30, 15)


def test_many_body_noninteracting_additivity(mb_setup):
    """W = 0: eigenvalues are exactly all sums of distinct one-body energies
    (exhaustive for K=6, N=2)."""
    grid, fields = mb_setup
    free_fields = FieldSpec(fields.vector_potential, fields.scalar_potential)
    modes = build_mode_basis(grid, free_fields, 0.2, 0.0, 6)
    hmb = assemble_many_body_hamiltonian(modes, free_fields, 0.2, 0.0, 2)
    got = np.sort(np.linalg.eigvalsh(hmb.matrix))
    eps = np.diag(hmb.one_body).real
    expected = np.sort([eps[i] + eps[j] for i, j in combinations(range(6), 2)])
    assert np.abs(got - expected).max() < 1e-10


def test_many_body_single_particle_reduces_to_one_body(mb_setup):
    grid, fields = mb_setup
    modes = build_mode_basis(grid, fields, 0.2, 0.0, 5)
    hmb = assemble_many_body_hamiltonian(modes, fields, 0.2, 0.0, 1)
    assert np.abs(hmb.matrix - hmb.one_body).max() < 1e-12


def test_many_body_matches_first_quantized_oracle(mb_setup):
    """Exhaustive K <= 4, N <= 2 equivalence including fermionic signs."""
    grid, fields = mb_setup
    for K in (2, 3, 4):
        modes = build_mode_basis(grid, fields, 0.5, 0.0, K)
        hmb = assemble_many_body_hamiltonian(modes, fields, 0.5, 0.0, 2)
        pairs, oracle = first_quantized_two_body(modes, fields, 0.5, 0.0, hmb.coupling)
        order = [hmb.basis.index[(1 << i) | (1 << j)] for i, j in pairs]
        perm = np.argsort(order)
        assert np.abs(hmb.matrix - oracle[np.ix_(perm, perm)].real).max() < 1e-10


def test_slater_state_examples(mb_setup):
    grid, fields = mb_setup
    modes = build_mode_basis(grid, fields, 0.5, 0.0, 4)
    basis = fock_basis(4, 2)

    psi = slater_state(basis, occupied=[0, 1])
    assert psi.coefficients[basis.index[0b0011]] == 1.0
    assert np.linalg.norm(psi.coefficients) == 1.0

    # unitary mixing of the occupied orbitals changes the state by a phase
    theta = 0.3
    u = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    orbitals = modes.vectors[:, :2] @ u
    psi_mixed = slater_state(basis, orbital_matrix=orbitals, modes=modes)
    overlap = np.vdot(psi.coefficients, psi_mixed.coefficients)
    assert abs(abs(overlap) - 1.0) <= 1e-10

    gamma = one_particle_rdm(psi)
    assert np.allclose(gamma.entries, np.diag([1.0, 1.0, 0.0, 0.0]), atol=1e-12)


def test_slater_state_rejects_bad_orbitals(mb_setup):
    grid, fields = mb_setup
    modes = build_mode_basis(grid, fields, 0.5, 0.0, 3)
    basis = fock_basis(3, 2)
    with pytest.raises(ValueError, match="distinct"):
        slater_state(basis, occupied=[1, 1])
    rng = np.random.default_rng(0)
    bad = np.linalg.qr(rng.normal(size=(grid.n_sites, 2)))[0]
    with pytest.raises(ValueError, match="projection error"):
        slater_state(basis, orbital_matrix=bad, modes=modes)


def test_evolution_phase_and_norm(mb_setup):
    grid, fields = mb_setup
    modes = build_mode_basis(grid, fields, 0.5, 0.0, 4)
    hmb = assemble_many_body_hamiltonian(modes, fields, 0.5, 0.0, 2)
    dec_w, dec_v = np.linalg.eigh(hmb.matrix)
    eigstate = ManyBodyState(coefficients=dec_v[:, 0], basis=hmb.basis)
    states = evolve_many_body(eigstate, hmb, [0.7, 1.9], 0.5)
    for s in states:
        assert abs(np.linalg.norm(s.coefficients) - 1.0) <= 1e-10
        assert abs(abs(np.vdot(eigstate.coefficients, s.coefficients)) - 1.0) <= 1e-10


def test_evolution_energy_conservation(mb_setup):
    grid, fields = mb_setup
    modes = build_mode_basis(grid, fields, 0.5, 0.0, 4)
    hmb = assemble_many_body_hamiltonian(modes, fields, 0.5, 0.0, 2)
    psi0 = slater_state(hmb.basis, occupied=[0, 2])
    e0 = np.vdot(psi0.coefficients, hmb.matrix @ psi0.coefficients).real
    for s in evolve_many_body(psi0, hmb, [0.3, 1.1, 2.4], 0.5):
        e = np.vdot(s.coefficients, hmb.matrix @ s.coefficients).real
        assert abs(e - e0) <= 1e-10 * max(abs(e0), 1.0)


def test_rdm_superposition_and_properties(mb_setup):
    basis = fock_basis(4, 2)
    coeff = np.zeros(basis.dimension)
    coeff[basis.index[0b0011]] = 1 / np.sqrt(2)
    coeff[basis.index[0b1100]] = 1 / np.sqrt(2)
    gamma = one_particle_rdm(ManyBodyState(coefficients=coeff, basis=basis))
    assert np.allclose(gamma.entries, 0.5 * np.eye(4), atol=1e-12)

    rng = np.random.default_rng(5)
    for _ in range(10):
        c = rng.normal(size=basis.dimension) + 1j * rng.normal(size=basis.dimension)
        c /= np.linalg.norm(c)
        g = one_particle_rdm(ManyBodyState(coefficients=c, basis=basis))
        ev = np.linalg.eigvalsh(g.entries)
        assert ev.min() >= -1e-10 and ev.max() <= 1 + 1e-10
        assert np.trace(g.entries).real == pytest.approx(2.0, abs=1e-10)


def test_compare_free_case_and_t0(mb_setup):
    grid, fields = mb_setup
    free = FieldSpec(fields.vector_potential, fields.scalar_potential)
    table = compare_hf_vs_exact(grid, free, 0.0, [2, 3], K=6, T=0.5,
                                checkpoints=[0.0, 0.25, 0.5], dt=0.0125)
    for row in table.rows:
        assert row.trace_error <= 1e-8
        assert row.hs_error <= 1e-8
    assert table.canonical_scaling


def test_compare_interacting_first_order_consistency(mb_setup):
    """HF matches the exact dynamics to first order: the residual RDM error
    must scale quadratically in the coupling strength."""
    grid, _ = mb_setup
    errs = []
    for w0 in (0.05, 0.1):
        fields = FieldSpec(zero_gauge(1), harmonic_potential(), gaussian_interaction(w0, 1.0))
        table = compare_hf_vs_exact(grid, fields, 0.0, [3], K=8, T=0.5,
                                    checkpoints=[0.5], dt=0.0125)
        errs.append(table.rows[0].hs_error)
    assert errs[1] / errs[0] == pytest.approx(4.0, rel=0.15)


def test_compare_checkpoint_validation(mb_setup):
    grid, fields = mb_setup
    with pytest.raises(ValueError, match="within"):
        compare_hf_vs_exact(grid, fields, 0.0, [2], K=4, T=0.5, checkpoints=[1.0])
    with pytest.raises(ValueError, match="multiples"):
        compare_hf_vs_exact(grid, fields, 0.0, [2], K=4, T=0.5, checkpoints=[0.33], dt=0.1)


def test_mode_basis_validation(mb_setup):
    grid, fields = mb_setup
    with pytest.raises(ValueError):
        build_mode_basis(grid, fields, 0.5, 0.0, 0)
    modes = build_mode_basis(grid, fields, 0.5, 0.0, 4)
    with pytest.raises(ValueError, match="match the mode basis"):
        assemble_many_body_hamiltonian(modes, fields, 0.25, 0.0, 2)
