"""mhflab: desk-scale laboratory for magnetic Schrodinger operators, spectral
projectors, Hartree-Fock dynamics, and exact fermionic benchmarks."""

from .lattice import (
    FieldSpec,
    Grid,
    HermitianOperator,
    build_grid,
    assemble_hamiltonian,
    momentum_operator,
    multiplication_operator,
    plane_wave_operator,
    gaussian_interaction,
    harmonic_potential,
    quartic_potential,
    polynomial_potential,
    symmetric_gauge,
    landau_gauge,
    zero_gauge,
    zero_potential,
)
from .spectra import (
    DensityMatrix,
    SpectralDecomposition,
    eigendecompose,
    spectral_projector,
    chemical_potential_for_rank,
    schatten_norm,
    operator_function,
    weyl_law_compare,
    clr_bound_check,
    agmon_decay_check,
    diamagnetic_check,
)
from .commutators import (
    commutator,
    initial_data_report,
    scaling_sweep,
    b_dependence_sweep,
    plane_wave_uniformity,
    lipschitz_transfer_check,
    momentum_commutator_identity_check,
    wigner_transform,
    quantum_gradient_check,
)
from .hartree_fock import (
    HFState,
    density_from_state,
    mean_field_potential,
    exchange_operator,
    hf_step,
    evolve,
    exchange_bound_check,
    interaction_moment,
)
from .many_body import (
    ModeBasis,
    FockBasis,
    ManyBodyState,
    build_mode_basis,
    fock_basis,
    assemble_many_body_hamiltonian,
    slater_state,
    evolve_many_body,
    one_particle_rdm,
    compare_hf_vs_exact,
)

__version__ = "0.1.0"
