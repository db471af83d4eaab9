"""mmWave channel and vehicle position tracking at desk scale.

Core pieces: geometric channel synthesis with hybrid beamformed measurements,
reduced sparsifying dictionaries, a multidimensional greedy pursuit, a
single-bounce geometric position solver with dead-reckoning fallback, a
constant-velocity Kalman baseline, and an experiment harness exposed through
a FastAPI service with a thin CLI client.
"""

from .signal import (
    ArrayGeometry,
    BeamformerSet,
    ChannelEstimate,
    MeasurementBatch,
    PathOrder,
    PathParams,
    WaveformConfig,
    channel_taps,
    measure,
    measure_paths,
    raised_cosine,
    steering_vector,
)
from .dictionaries import (
    DictionarySet,
    Grid1D,
    GridKind,
    build_full,
    build_reduced,
    build_reduced_angular,
    build_reduced_delay,
)
from .momp import MompProblem, SparseSolution, apply_atom, estimate_channel, momp_solve
from .geometry import (
    LocalizationInput,
    LocMode,
    PositionEstimate,
    dead_reckon,
    localizable,
    solve_position,
)
from .scene import Scene, Trajectory, TrajectoryFrame, frame_to_channel, generate_trajectory
from .pipeline import KfState, Tracker, TrackerConfig, TrackerState, classify_paths, kf_update
from .metrics import match_paths, percentile
from .harness import RunConfig, run_experiment

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
