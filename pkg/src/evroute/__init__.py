"""Joint optimization of charging-station placement and battery-aware
routing: an annealed quadratic-model route solver inside, a surrogate-guided
combinatorial search outside."""

from .anneal import SaSchedule, SolveResult, solve_exhaustive, solve_sa
from .bocs import (
    BocsParams,
    IterationRecord,
    PriorConfig,
    SampleSet,
    SearchHistory,
    SurrogateModel,
    acquire,
    feature_terms,
    featurize,
    fit_posterior_sample,
    n_features,
    posterior_mean,
    run_bocs,
    run_random_search,
)
from .evaluator import (
    BatteryTrace,
    DecodeError,
    EvalParams,
    Evaluation,
    StationConfig,
    Tour,
    constraint_penalty,
    decode_tour,
    encode_tour,
    evaluate_config,
    simulate_battery,
    travel_cost,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    SeedRun,
    Summary,
    export,
    run_experiment,
    run_random_baseline,
    summarize,
    summary_from_history_files,
)
from .instance import (
    BatteryParams,
    GenParams,
    InstanceParseError,
    InstanceValidationError,
    Location,
    ProblemInstance,
    generate_instance,
    load_instance,
    save_instance,
)
from .qubo import (
    PenaltyWeights,
    QuboModel,
    build_battery_qubo,
    build_total_qubo,
    build_tsp_qubo,
    default_penalty_weights,
    drain_matrix,
    energy,
    flatten,
    unflatten,
)
from .route_sa import solve_route_sa

__version__ = "0.1.0"

__all__ = [
    "SaSchedule", "SolveResult", "solve_exhaustive", "solve_sa",
    "BocsParams", "IterationRecord", "PriorConfig", "SampleSet",
    "SearchHistory", "SurrogateModel", "acquire", "feature_terms",
    "featurize", "fit_posterior_sample", "n_features", "posterior_mean",
    "run_bocs", "run_random_search",
    "BatteryTrace", "DecodeError", "EvalParams", "Evaluation",
    "StationConfig", "Tour", "constraint_penalty", "decode_tour",
    "encode_tour", "evaluate_config", "simulate_battery", "travel_cost",
    "ExperimentConfig", "ExperimentReport", "SeedRun", "Summary", "export",
    "run_experiment", "run_random_baseline", "summarize",
    "summary_from_history_files",
    "BatteryParams", "GenParams", "InstanceParseError",
    "InstanceValidationError", "Location", "ProblemInstance",
    "generate_instance", "load_instance", "save_instance",
    "PenaltyWeights", "QuboModel", "build_battery_qubo", "build_total_qubo",
    "build_tsp_qubo", "default_penalty_weights", "drain_matrix", "energy",
    "flatten", "unflatten",
    "solve_route_sa",
    "__version__",
]
