"""Low-rank quantum state tomography via damped, projected-SVT approximate
message passing, with measurement planning, shot/noise simulation, and a
momentum-inspired factored gradient descent baseline."""

from .amp import AmpConfig, AmpState, AmpTrace, estimate_onsager, psvt, run_amp, svt
from .errors import DivergenceError
from .measure import (
    NoiseModel,
    OutcomeDistribution,
    PhotonicNoise,
    ShotRecord,
    apply_coherent,
    apply_composite,
    apply_depolarizing,
    apply_loss,
    apply_pauli_flip,
    apply_readout,
    build_measurements,
    estimate_from_setting,
    exact_expectations,
    noisy_basis_measurement,
    outcome_distribution,
    sample_shots_observable,
)
from .mifgd import MifgdConfig, momentum_schedule, run_mifgd
from .pauli import (
    MeasurementPlan,
    PauliString,
    SensingMap,
    apply_adjoint,
    apply_sensing,
    build_pauli,
    build_sensing_map,
    observables_of_setting,
    sample_observables,
    sample_settings_until,
)
from .states import (
    SpectralDecomposition,
    make_named_state,
    make_random_state,
    nmse,
    project_to_density,
    pure_density,
    spectral_decompose,
    state_fidelity,
)

__version__ = "0.1.0"
