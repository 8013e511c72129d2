"""Finite-key toolkit for fully passive time-bin QKD.

Models the passive transmitter's output distribution and its post-selection,
simulates an honest lossy channel with passive basis choice at the receiver,
and evaluates the decoy-state finite-key bounds that turn observed counts into
a secret key length.
"""

from fpqkd.errors import (
    ConvergenceError,
    DegenerateRegionError,
    DomainError,
    InconsistencyError,
    InfeasibleLPError,
    PipelineError,
)
from fpqkd.source import (
    EXPERIMENT_THRESHOLDS,
    PostSelectionConfig,
    PulseState,
    Region,
    classify,
    intensity_thresholds,
    lambda_ideal,
    mu_max_theta,
    pdf,
    photon_stats,
    region_integral,
    state_from_local_measurements,
)
from fpqkd.fock import FockDensityMatrix, fock_matrix, td_table, trace_distance
from fpqkd.kato import (
    kato_direct_lower,
    kato_direct_upper,
    kato_reverse_lower,
    kato_reverse_upper,
    serfling_upsilon,
)
from fpqkd.estimator import (
    KeyRateReport,
    Observables,
    SecurityParams,
    SourceStats,
    error_lp,
    estimate_key_rate,
    key_length,
    m_z1_bounds,
    phase_error_upper,
    security_accounting,
    source_stats,
    yield_lp,
)
from fpqkd.simulator import (
    ChannelModel,
    calibrate_misalignment,
    expected_observables,
    sample_observables,
    sample_run,
)

__version__ = "0.1.0"
