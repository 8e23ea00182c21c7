"""Eigendecompositions, projectors, Schatten norms, spectral diagnostics."""

import numpy as np
import pytest

from mhflab.lattice import (
    FieldSpec,
    build_grid,
    assemble_hamiltonian,
    harmonic_potential,
    symmetric_gauge,
    zero_gauge,
)
from mhflab.spectra import (
    DegenerateThresholdError,
    DensityMatrix,
    agmon_decay_check,
    chemical_potential_for_rank,
    clr_bound_check,
    diamagnetic_check,
    eigendecompose,
    operator_function,
    schatten_norm,
    spectral_projector,
    weyl_law_compare,
)
from mhflab.commutators import commutator


def test_eigendecompose_examples():
    dec = eigendecompose(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(dec.eigenvalues, [1, 2, 3])

    dec = eigendecompose(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(dec.eigenvalues, [-1, 1])
    for n in range(2):
        v = dec.eigenvectors[:, n]
        assert np.allclose(np.abs(v), 1 / np.sqrt(2))


def test_eigendecompose_oscillator(osc_decomp_h005):
    lam = osc_decomp_h005.eigenvalues[:3]
    exact = 0.05 * (2 * np.arange(3) + 1)
    assert np.all(np.abs(lam - exact) / exact < 0.005)


def test_eigendecomposition_invariants(osc_grid_401, osc_fields):
    H = assemble_hamiltonian(osc_grid_401, osc_fields, 0.1, 0.0)
    dec = eigendecompose(H)
    resid = np.linalg.norm(H.entries @ dec.eigenvectors - dec.eigenvectors * dec.eigenvalues, axis=0)
    assert np.all(resid <= 1e-8 * (np.abs(dec.eigenvalues) + dec.operator_norm))
    gram = dec.eigenvectors.conj().T @ dec.eigenvectors
    assert np.abs(gram - np.eye(dec.size)).max() <= 1e-10


def test_spectral_projector_edges():
    dec = eigendecompose(np.diag([1.0, 2.0, 3.0]))
    assert np.allclose(spectral_projector(dec, 0.5).entries, 0.0)
    assert np.allclose(spectral_projector(dec, 3.5).entries, np.eye(3))
    with pytest.raises(DegenerateThresholdError, match="2"):
        spectral_projector(dec, 2.0 + 1e-12)


def test_spectral_projector_oscillator_rank(osc_decomp_h005):
    proj = spectral_projector(osc_decomp_h005, 1.0)
    assert proj.rank == 10
    proj.validate(projector=True)


def test_chemical_potential_examples(osc_decomp_h01):
    dec = eigendecompose(np.diag([1.0, 2.0, 3.0]))
    assert chemical_potential_for_rank(dec, 1) == 1.5
    assert chemical_potential_for_rank(dec, 3) == 4.0  # lambda_M + 1 convention
    mu = chemical_potential_for_rank(osc_decomp_h01, 5)
    lam = osc_decomp_h01.eigenvalues
    assert mu == (lam[4] + lam[5]) / 2
    assert abs(mu - 1.0) < 0.01  # continuum midpoint of 0.9 and 1.1; O(h^2) shift
    deg = eigendecompose(np.diag([1.0, 1.0, 2.0]))
    with pytest.raises(DegenerateThresholdError, match="different N"):
        chemical_potential_for_rank(deg, 1)
    with pytest.raises(ValueError):
        chemical_potential_for_rank(dec, 0)


def test_schatten_norm_examples():
    idm = np.eye(7)
    assert schatten_norm(idm, 1) == pytest.approx(7)
    assert schatten_norm(idm, 2) == pytest.approx(np.sqrt(7))
    assert schatten_norm(idm, np.inf) == pytest.approx(1)

    rng = np.random.default_rng(3)
    u = rng.normal(size=5) + 1j * rng.normal(size=5)
    u /= np.linalg.norm(u)
    rank1 = np.outer(u, u.conj())
    for p in (1, 2, np.inf):
        assert schatten_norm(rank1, p) == pytest.approx(1.0, abs=1e-12)

    with pytest.raises(ValueError):
        schatten_norm(idm, 3)


def test_schatten_tuple_l2_combination():
    a, b = np.eye(2), 2 * np.eye(2)
    assert schatten_norm([a, b], np.inf) == pytest.approx(np.sqrt(1 + 4))


def test_projector_commutator_ladder_oracle(osc_grid_801, osc_decomp_h005):
    """Trace norm of [Pi_N, x] for the oscillator: ladder closed form
    sqrt(2 hbar N) = 1.0 at hbar=0.05, N=10; dense SVD as the oracle."""
    proj = spectral_projector(osc_decomp_h005, 1.0)
    x = np.diag(osc_grid_801.axis_coords())
    tn = schatten_norm(commutator(proj.entries, x), 1)
    assert tn == pytest.approx(1.0, rel=0.02)
    # HS and op norms from the same closed form: sqrt(hbar N), sqrt(hbar N / 2)
    assert schatten_norm(commutator(proj.entries, x), 2) == pytest.approx(np.sqrt(0.5), rel=0.02)
    assert schatten_norm(commutator(proj.entries, x), np.inf) == pytest.approx(0.5, rel=0.02)


def test_schatten_ordering_and_hoelder_seeded_corpus():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = rng.integers(2, 9)
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        n_inf, n_2, n_1 = (schatten_norm(a, np.inf), schatten_norm(a, 2), schatten_norm(a, 1))
        assert n_inf <= n_2 * (1 + 1e-12)
        assert n_2 <= n_1 * (1 + 1e-12)
        assert schatten_norm(a @ b, 1) <= schatten_norm(a, 2) * schatten_norm(b, 2) * (1 + 1e-12)


def test_operator_function(osc_decomp_h01):
    dec = eigendecompose(np.diag([1.0, 2.0, 3.0]))
    assert np.allclose(operator_function(dec, lambda w: w).entries, np.diag([1.0, 2, 3]), atol=1e-10)
    assert np.allclose(operator_function(dec, lambda w: np.ones_like(w)).entries, np.eye(3), atol=1e-12)
    mu = chemical_potential_for_rank(osc_decomp_h01, 5)
    ind = operator_function(osc_decomp_h01, lambda w: (w <= mu).astype(float))
    proj = spectral_projector(osc_decomp_h01, mu)
    assert np.abs(ind.entries - proj.entries).max() < 1e-12


def test_density_matrix_validation():
    good = DensityMatrix(entries=np.diag([1.0, 0.5, 0.0]))
    good.validate()
    with pytest.raises(ValueError, match="spectrum"):
        DensityMatrix(entries=np.diag([1.5, 0.0])).validate()
    with pytest.raises(ValueError, match="idempotent"):
        DensityMatrix(entries=np.diag([0.5, 0.0])).validate(projector=True)


# ---------------------------------------------------------------------------
# Weyl law
# ---------------------------------------------------------------------------

def test_weyl_below_bottom(osc_fields):
    grid = build_grid(1, 101, 6.0)
    rep = weyl_law_compare(grid, osc_fields, 0.1, 0.0, -0.5)
    assert rep.quantum_count == 0.0
    assert rep.classical_count == 0.0


def test_weyl_oscillator_exact_point(osc_grid_801, osc_fields, osc_decomp_h005):
    rep = weyl_law_compare(osc_grid_801, osc_fields, 0.05, 0.0, 1.0, decomp=osc_decomp_h005)
    assert rep.quantum_count == pytest.approx(10.0, abs=1e-9)
    # analytic mu/(2 hbar) = 10; trapezoid error is O(h^{3/2}) at the turning points
    assert rep.classical_count == pytest.approx(10.0, rel=5e-3)
    assert not rep.boundary_warning


def test_weyl_boundary_warning(osc_fields):
    grid = build_grid(1, 101, 1.0)  # classical region {x^2 <= 2} sticks out
    rep = weyl_law_compare(grid, osc_fields, 0.1, 0.0, 2.0)
    assert rep.boundary_warning


# ---------------------------------------------------------------------------
# CLR
# ---------------------------------------------------------------------------

def test_clr_trivial_and_frozen_example(osc_grid_801, osc_fields, osc_decomp_h005):
    low = clr_bound_check(osc_grid_801, osc_fields, 0.05, 0.0, -3.0, 0.5, decomp=osc_decomp_h005)
    assert low.lhs_count == 0 and low.holds

    rep = clr_bound_check(osc_grid_801, osc_fields, 0.05, 0.0, 1.0, 0.5, decomp=osc_decomp_h005)
    # analytic: #{0.05(2n+1) <= 1.125} = 11; rhs = 20 * 4 eps^{-3/2}/((4pi)^{1/2}Gamma(3/2))
    #           * (3 pi / 8) * 1.1875^2 = 119.65...
    assert rep.lhs_count == 11
    assert rep.rhs_bound == pytest.approx(119.656, rel=1e-3)
    assert rep.holds


def test_clr_rhs_field_independent(osc_fields):
    grid = build_grid(2, 25, 3.0)
    fields = FieldSpec(symmetric_gauge(), harmonic_potential())
    reps = [clr_bound_check(grid, fields, 0.4, b, 1.5, 0.5) for b in (0.0, 1.0, 2.0)]
    assert all(r.holds for r in reps)
    assert len({round(r.rhs_bound, 9) for r in reps}) == 1


# ---------------------------------------------------------------------------
# Agmon
# ---------------------------------------------------------------------------

def test_agmon_ground_state_unweighted(osc_grid_401, osc_fields, osc_decomp_h01):
    rep = agmon_decay_check(osc_grid_401, osc_fields, osc_decomp_h01, 0.1, 1.0, 0.25)
    assert rep.n_eigenfunctions == int(np.sum(osc_decomp_h01.eigenvalues < 1.0 + 0.25 / 4))
    # eigenfunctions live where phi = 0, so the weights are invisible
    assert rep.max_weighted_norm == pytest.approx(1.0, abs=1e-6)


def test_agmon_region_validation(osc_grid_401, osc_fields, osc_decomp_h01):
    bad_region = np.zeros(osc_grid_401.n_sites, dtype=bool)
    bad_region[:3] = True
    with pytest.raises(ValueError, match="classical region"):
        agmon_decay_check(osc_grid_401, osc_fields, osc_decomp_h01, 0.1, 1.0, 0.25,
                          u_region=bad_region)


def test_agmon_hbar_uniformity(osc_grid_401, osc_fields, osc_decomp_h01, osc_grid_801,
                               osc_decomp_h005):
    w1 = agmon_decay_check(osc_grid_401, osc_fields, osc_decomp_h01, 0.1, 1.0, 0.25)
    w2 = agmon_decay_check(osc_grid_801, osc_fields, osc_decomp_h005, 0.05, 1.0, 0.25)
    hi, lo = max(w1.max_weighted_norm, w2.max_weighted_norm), min(w1.max_weighted_norm,
                                                                  w2.max_weighted_norm)
    assert hi / lo <= 2.0


# ---------------------------------------------------------------------------
# Diamagnetic
# ---------------------------------------------------------------------------

def test_diamagnetic_zero_field_equality(osc_fields):
    grid = build_grid(1, 101, 5.0)
    rep = diamagnetic_check(grid, osc_fields, 0.1, 0.0)
    assert rep.ground_energy_b == pytest.approx(rep.ground_energy_0, abs=1e-13)
    assert rep.holds


def test_diamagnetic_monotone_2d():
    grid = build_grid(2, 31, 3.0)
    fields = FieldSpec(symmetric_gauge(), harmonic_potential())
    energies = []
    for b in (0.0, 0.5, 1.0, 2.0):
        rep = diamagnetic_check(grid, fields, 0.1, b)
        assert rep.holds
        energies.append(rep.ground_energy_b)
    assert energies[2] > energies[0]
    assert all(e1 <= e2 + 1e-12 for e1, e2 in zip(energies, energies[1:]))
