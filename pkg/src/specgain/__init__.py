"""Online correction of expected information gain with regret guarantees.

Modules: :mod:`~specgain.estimator` (improvement function), :mod:`~specgain.gridworld`
(occupancy world, sensor and gains), :mod:`~specgain.planner` (lattice candidates and
selection), :mod:`~specgain.regret` (regret accounting and bound checks) and
:mod:`~specgain.harness` (episodes, sweeps, comparisons).
"""

from .estimator import (
    BanditContext,
    CellEstimator,
    DomainError,
    ImprovementFunction,
    bin_index,
    ftrl_step,
    hallucinated_loss,
    query,
    randomization_level,
    update_cell,
)
from .gridworld import (
    Observation,
    OccupancyGrid,
    Pose,
    SensorConfig,
    StepRecord,
    World,
    expected_info_gain,
    logodds_update,
    make_world,
    sensor_observe,
    specific_info_gain,
    voxel_entropy,
)
from .harness import EpisodeLog, ExperimentConfig, compare_modes, run_episode, sweep
from .kernels import BACKEND
from .planner import (
    CandidatePath,
    PlannerConfig,
    PlanningError,
    exhaustive_best_path,
    sample_candidates,
    score_path,
    select_path,
)
from .regret import (
    ConsistencyError,
    PerceptionRegretReport,
    RegretLedger,
    best_fixed_delta,
    check_bandit_bound,
    check_full_info_bound,
    estimation_regret,
    perception_regret,
    play_game,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BanditContext",
    "CandidatePath",
    "CellEstimator",
    "ConsistencyError",
    "DomainError",
    "EpisodeLog",
    "ExperimentConfig",
    "ImprovementFunction",
    "Observation",
    "OccupancyGrid",
    "PerceptionRegretReport",
    "PlannerConfig",
    "PlanningError",
    "Pose",
    "RegretLedger",
    "SensorConfig",
    "StepRecord",
    "World",
    "best_fixed_delta",
    "bin_index",
    "check_bandit_bound",
    "check_full_info_bound",
    "compare_modes",
    "estimation_regret",
    "exhaustive_best_path",
    "expected_info_gain",
    "ftrl_step",
    "hallucinated_loss",
    "logodds_update",
    "make_world",
    "perception_regret",
    "play_game",
    "query",
    "randomization_level",
    "run_episode",
    "sample_candidates",
    "score_path",
    "select_path",
    "sensor_observe",
    "specific_info_gain",
    "sweep",
    "update_cell",
    "voxel_entropy",
]
