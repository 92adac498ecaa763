"""Fixed-step simulation of a nonlinear active cochlear model.

A 1-D transmission-line cochlea with two-mass micro-mechanics and
saturating outer-hair-cell feedback, discretized jointly in space and
time, plus a continuous-time reference integrator, stability analysis,
experiment stimuli, and an auditory cochleagram pipeline.
"""

from .auditory import (
    Cochleagram,
    PipelineConfig,
    cochleagram,
    ihc_envelope,
    normalized_similarity,
    outer_middle_gain,
    resample,
    spectrogram_db,
    spl_ladder_similarity,
)
from .assembly import SystemMatrices, assemble
from .errors import (
    CochlearModelError,
    ConfigError,
    InsufficientHistory,
    NoConvergence,
    NoResponse,
    NumericalBlowup,
    SingularMatrix,
    UnsupportedRatio,
    WindowTooLong,
)
from .params import (
    ElementCoefficients,
    PhysicalConstants,
    active_coefficients,
    characteristic_frequencies,
    coefficient_positions,
    constants_from_file,
    element_positions,
    passive_coefficients,
)
from .reference import SemiDiscreteSystem, build_semi_discrete, integrate
from .solver import CochleaResponse, SimConfig, Simulator, simulate
from .stability import (
    StabilityReport,
    max_eigenvalue_magnitude,
    nonlinear_stability_trace,
    stability_sweep,
)
from .stimuli import (
    Stimulus,
    excited_band,
    io_curve,
    make_chirp,
    make_impulse,
    make_tone,
    measure_spl,
    spl_scale,
    steady_state_profile,
    transit_time,
)

__version__ = "0.1.0"
