"""Doppler-only source state estimation.

Estimates the position, velocity, and (optionally) transmit frequency of a
moving signal source from the Doppler-shifted frequencies measured at known
receivers. The measurement equations become polynomial after squaring, and
every isolated solution is found by tracking a pre-computed generic solution
set to the measured instance with parameter homotopy continuation; physical
filtering then reduces the endpoints to ranked candidates.

Typical use:

    from dopploc import solve_doppler
    result = solve_doppler(receivers, c=1500.0)
    state = result.best.state        # position, velocity, frequency

or through the scikit-learn style facade:

    from dopploc import DopplerSourceEstimator
    est = DopplerSourceEstimator(c=1500.0).fit(receiver_matrix)
    est.position_, est.velocity_, est.frequency_
"""

__version__ = "0.1.0"

from .estimator import DopplerSourceEstimator, SolveResult, solve_doppler
from .exceptions import (
    BadStartSolutionError,
    CoincidentPointsError,
    CorruptPackError,
    DegenerateDrawError,
    DegenerateOrbitError,
    DimensionMismatchError,
    DopplocError,
    FamilyMismatchError,
    FormatError,
    HyperbolicOrbitError,
    InvalidScaleError,
    NoCandidatesError,
    NoProgressError,
    NotSymmetricError,
    PackMissingError,
    SingularMatrixError,
    ZeroFrequencyError,
)
from .fileio import (
    MeasurementSet,
    SolutionRecord,
    load_measurement,
    load_pack,
    load_report,
    load_scenario,
    load_solution,
    save_measurement,
    save_pack,
    save_report,
    save_scenario,
    save_solution,
)
from .filtering import Candidate, FilterConfig, FilterStats, filter_endpoints, filter_endpoints_with_stats
from .model import (
    DopplerSystem,
    Receiver,
    ScaleFrame,
    TransmitterState,
    default_frame,
    doppler_frame,
    pack_parameters,
    predict_frequency,
    rescale,
    unpack_parameters,
    unsquared_residual,
)
from .monodromy import (
    StartPack,
    build_pack,
    default_pack,
    expand_by_symmetry,
    halve_by_symmetry,
    populate,
    rebase_pack,
    seed_instance,
)
from .orbits import (
    EARTH_MU,
    EARTH_RADIUS,
    EARTH_ROTATION_RATE,
    SPEED_OF_LIGHT,
    OrbitalElements,
    cartesian_to_elements,
    elements_to_cartesian,
)
from .scenarios import (
    MonteCarloReport,
    NoiseConfig,
    Scenario,
    TrialRecord,
    dolphin_noise,
    dolphin_scenario,
    iod_noise,
    iod_scenario,
    random_scenario,
    run_monte_carlo,
    simulate_measurements,
)
from .tracking import PathResult, TrackerConfig, newton_polish, track_all

__all__ = [
    "__version__",
    # solver facade
    "solve_doppler",
    "SolveResult",
    "DopplerSourceEstimator",
    # model
    "TransmitterState",
    "Receiver",
    "DopplerSystem",
    "ScaleFrame",
    "predict_frequency",
    "unsquared_residual",
    "pack_parameters",
    "unpack_parameters",
    "default_frame",
    "doppler_frame",
    "rescale",
    # tracking
    "TrackerConfig",
    "PathResult",
    "track_all",
    "newton_polish",
    # monodromy / start packs
    "StartPack",
    "seed_instance",
    "populate",
    "build_pack",
    "halve_by_symmetry",
    "expand_by_symmetry",
    "rebase_pack",
    "default_pack",
    # filtering
    "FilterConfig",
    "FilterStats",
    "Candidate",
    "filter_endpoints",
    "filter_endpoints_with_stats",
    # orbits
    "OrbitalElements",
    "elements_to_cartesian",
    "cartesian_to_elements",
    "EARTH_MU",
    "EARTH_RADIUS",
    "EARTH_ROTATION_RATE",
    "SPEED_OF_LIGHT",
    # scenarios
    "Scenario",
    "NoiseConfig",
    "TrialRecord",
    "MonteCarloReport",
    "simulate_measurements",
    "dolphin_scenario",
    "dolphin_noise",
    "iod_scenario",
    "iod_noise",
    "random_scenario",
    "run_monte_carlo",
    # file formats
    "MeasurementSet",
    "SolutionRecord",
    "save_scenario",
    "load_scenario",
    "save_measurement",
    "load_measurement",
    "save_solution",
    "load_solution",
    "save_report",
    "load_report",
    "save_pack",
    "load_pack",
    # errors
    "DopplocError",
    "SingularMatrixError",
    "DimensionMismatchError",
    "CoincidentPointsError",
    "ZeroFrequencyError",
    "InvalidScaleError",
    "BadStartSolutionError",
    "DegenerateDrawError",
    "NoProgressError",
    "NotSymmetricError",
    "FormatError",
    "CorruptPackError",
    "FamilyMismatchError",
    "NoCandidatesError",
    "PackMissingError",
    "HyperbolicOrbitError",
    "DegenerateOrbitError",
]
