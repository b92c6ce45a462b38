"""thermocc: building thermal simulation and occupancy inference.

Simulates the temperature dynamics of a multi-room building under bang-bang
HVAC control with stochastically moving occupants, then reconstructs the
per-room occupancy time series from noisy temperature measurements via a
constrained, L2-regularized least-squares fit.
"""

from .estimate import (
    EstimationProblem,
    EstimationResult,
    EstimatorKnowns,
    EstimatorOptions,
    ResidualReport,
    assemble,
    residual_report,
    solve,
)
from .mobility import (
    MobilityMap,
    ReconstructionScore,
    schedule_to_map,
    score,
    to_mobility_map,
)
from .model import (
    AmbientFile,
    BuildingLayout,
    RoomClass,
    ScenarioConfig,
    SyntheticAmbient,
    ThermalParams,
    ValidationError,
    default_paper_scenario,
)
from .qp import InfeasibleError, SolverError, SolverStats
from .simulate import (
    OccupancySchedule,
    SensorTrace,
    SimulationError,
    SimulationTrace,
    add_sensor_noise,
    controller_update,
    generate_ambient,
    generate_schedule,
    simulate,
    step_temperature,
)
from .units import convert_temperature, convert_temperature_delta

__version__ = "0.1.0"

__all__ = [
    "AmbientFile",
    "BuildingLayout",
    "EstimationProblem",
    "EstimationResult",
    "EstimatorKnowns",
    "EstimatorOptions",
    "InfeasibleError",
    "MobilityMap",
    "OccupancySchedule",
    "ReconstructionScore",
    "ResidualReport",
    "RoomClass",
    "ScenarioConfig",
    "SensorTrace",
    "SimulationError",
    "SimulationTrace",
    "SolverError",
    "SolverStats",
    "SyntheticAmbient",
    "ThermalParams",
    "ValidationError",
    "add_sensor_noise",
    "assemble",
    "controller_update",
    "convert_temperature",
    "convert_temperature_delta",
    "default_paper_scenario",
    "generate_ambient",
    "generate_schedule",
    "residual_report",
    "schedule_to_map",
    "score",
    "simulate",
    "solve",
    "step_temperature",
    "to_mobility_map",
]
