"""Coupled CO2-temperature zone-network simulation and moving-window
Bayesian inference."""

from ._backend import backend_name
from .forward import (
    AirKnowns,
    AmbientSeries,
    PhysicalParams,
    ThermalKnowns,
    Trajectory,
    forward_co2,
    forward_thermal,
    integrate,
    macaulay,
)
from .network import (
    FlowAssignment,
    FlowEdge,
    ThermalEdge,
    TreeCotree,
    Zone,
    ZoneNetwork,
    build_network,
    solve_dependent_flows,
    tree_cotree_decompose,
)
from .params import BlockLayout, ParameterVector
from .priors import OUT_OF_SUPPORT, PriorModel, PriorSpec, log_prior
from .likelihood import LogPosterior, WindowData, log_likelihood, log_posterior
from .ram import ChainOutput, ChainState, RamConfig, accept_prob, propose, ram_adapt, run_chain
from .windows import (
    InferenceConfig,
    PredictiveBands,
    WindowPlan,
    WindowResult,
    infer_window,
    make_plans,
    posterior_predictive,
    run_moving_window,
    slice_window,
    warm_start,
)
from .benchmark import (
    BenchmarkSetup,
    Dataset,
    NoiseSpec,
    OccupancySchedule,
    forecast_eval,
    generate_synthetic,
    load_benchmark,
    nrmse,
    rmse,
    sweep,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
