"""Joint passive/active IRS deployment planning over a gridded region."""

from .scenario import (
    BS_NODE,
    CostModel,
    RadioParams,
    Scenario,
    ScenarioError,
    build_los_graph,
    load_scenario,
    load_scenario_file,
    worst_case_distance,
)
from .snr import (
    DeploymentPlan,
    PathKind,
    PathSolution,
    all_passive_path_snr,
    direct_snr,
    hybrid_path_snr,
    path_gain_sq,
    total_cost,
    tradeoff_ratio,
)
from .routing import (
    NegativeCycleError,
    all_cell_snrs,
    best_all_passive,
    best_hybrid,
    brute_force_best_path,
    cell_snrs,
    overall_snr,
    worst_cell_snr,
)
from .channel import build_channels, explicit_path_snr
from .tiles import (
    brute_force_tiles,
    check_feasibility,
    freeze_paths,
    reconstruct_tiles,
    sequential_refine,
    solve_relaxation,
)

__version__ = "0.1.0"
