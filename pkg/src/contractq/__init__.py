"""Optimal performance-monitoring contracts.

A principal chooses how finely to grade an agent's output (the monitoring
technology) together with the wages paid per grade.  This package solves
for both: wage programs per partition, searches over partitions, random
monitoring channels, and exhaustive oracles for small instances.
"""

from .cells import CellSummary, make_cells
from .channel import Channel, ChannelSolution, mutual_information, solve_channel
from .env import (
    DiscreteGrid,
    MultiTaskEnvironment,
    NormalSignal,
    ProductEnvironment,
    UniformZ,
    cell_moments,
    cells_from_cutoffs,
    discrete_grid_env,
    halfplane_moments,
    normal_signal_env,
    quantile_atoms,
    uniform_z_env,
    zlambda_moments,
)
from .errors import ConfigError, ContractError, ConvergenceError, EmptyCellError, InfeasibleError
from .monitoring import MonitoringCostSpec, check_cost_axioms, entropy_bits, monitoring_cost
from .multitask import MultitaskResult, full_information_multipliers, optimize_multitask
from .oracle import DiscreteInstance, OracleResult, brute_force_bipartition_2d, brute_force_single
from .single import full_information_cost, optimize_cutoffs_single, optimize_rating_scale
from .solution import (
    BiPartitionLine,
    ContractSolution,
    CutoffPartition,
    ProductPartition,
    strict_mlrp_violations,
)
from .sweep import sweep
from .twoagent import (
    group_index_sweep,
    group_vs_individual_index,
    optimize_bipartition,
    optimize_individual,
)
from .utility import UtilitySpec, cara_utility, custom_utility, sqrt_utility
from .wages import (
    DualCertificate,
    WageSchedule,
    closed_form_cost_sqrt,
    solve_ir_single,
    solve_ll_multiagent,
    solve_ll_multiaction,
    solve_ll_single,
)

__version__ = "0.1.0"

__all__ = [
    "BiPartitionLine", "CellSummary", "Channel", "ChannelSolution", "ConfigError", "ContractError",
    "ContractSolution", "ConvergenceError", "CutoffPartition", "DiscreteGrid", "DiscreteInstance",
    "DualCertificate", "EmptyCellError", "InfeasibleError", "MonitoringCostSpec", "MultiTaskEnvironment",
    "MultitaskResult", "NormalSignal", "OracleResult", "ProductEnvironment", "ProductPartition",
    "UniformZ", "UtilitySpec", "WageSchedule", "brute_force_bipartition_2d", "brute_force_single",
    "cara_utility", "cell_moments", "cells_from_cutoffs", "check_cost_axioms", "closed_form_cost_sqrt",
    "custom_utility", "discrete_grid_env", "entropy_bits", "full_information_cost",
    "full_information_multipliers", "group_index_sweep", "group_vs_individual_index",
    "halfplane_moments", "make_cells", "monitoring_cost", "mutual_information", "normal_signal_env",
    "optimize_bipartition", "optimize_cutoffs_single", "optimize_individual", "optimize_multitask",
    "optimize_rating_scale", "quantile_atoms", "solve_channel", "solve_ir_single",
    "solve_ll_multiaction", "solve_ll_multiagent", "solve_ll_single", "sqrt_utility",
    "strict_mlrp_violations", "sweep", "uniform_z_env", "zlambda_moments",
]
