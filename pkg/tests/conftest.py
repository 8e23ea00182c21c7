"""Shared fixtures: cached eigendecompositions for the oscillator corpus."""

import pytest

from mhflab.lattice import (
    FieldSpec,
    build_grid,
    assemble_hamiltonian,
    gaussian_interaction,
    harmonic_potential,
    symmetric_gauge,
    zero_gauge,
)
from mhflab.spectra import eigendecompose


@pytest.fixture(scope="session")
def osc_fields():
    return FieldSpec(zero_gauge(1), harmonic_potential())


@pytest.fixture(scope="session")
def osc_interacting_fields():
    return FieldSpec(zero_gauge(1), harmonic_potential(), gaussian_interaction(1.0, 1.0))


@pytest.fixture(scope="session")
def osc_grid_801():
    return build_grid(1, 801, 8.0)


@pytest.fixture(scope="session")
def osc_decomp_h005(osc_grid_801, osc_fields):
    """Oscillator at hbar = 0.05 on the fine acceptance grid."""
    return eigendecompose(assemble_hamiltonian(osc_grid_801, osc_fields, 0.05, 0.0))


@pytest.fixture(scope="session")
def osc_grid_401():
    return build_grid(1, 401, 8.0)


@pytest.fixture(scope="session")
def osc_decomp_h01(osc_grid_401, osc_fields):
    """Oscillator at hbar = 0.1 on the default d=1 grid."""
    return eigendecompose(assemble_hamiltonian(osc_grid_401, osc_fields, 0.1, 0.0))


@pytest.fixture(scope="session")
def landau_fields():
    return FieldSpec(symmetric_gauge(), harmonic_potential())
