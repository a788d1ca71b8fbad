"""Global input sourcing with stochastic delivery lags and input inventories.

A quantitative model of firms that buy domestic and foreign inputs, face
demand shocks and random delivery times, and hold inventories: dynamic
program, stationary panel simulation, moment calibration, counterfactual
decompositions, transition paths, and the companion empirical measures.
"""

from .errors import (CalibrationError, ConfigurationError, GridCoverageError,
                     NonConvergenceError, SolverError)
from .model import (DeliveryRegime, FirmState, ModelParams, ShockDraw,
                    apply_tariff, benchmark_params, ces_output, demand_quantity,
                    geometric_sd, inventory_next, inverse_demand,
                    lambda_from_days)
from .shocks import (RandomStream, ShockLattice, ShockSample,
                     build_lambda_lattice, build_shock_lattice,
                     discretize_lognormal, dump_lattice_csv, sample_shocks)
from .stage import StageSolution, solve_stage, stage_value_expectation
from .solver import (InventoryGrid, OrderPolicyField, SolveResult, ValueField,
                     bellman_update, deterministic_usage, interpolate_value,
                     load_fields_csv, save_fields_csv, solve_value_function)
from .simulate import (FirmPanel, MOMENT_ROWS, MomentSet, QuarterPlan,
                       moment_deltas, simulate_panel, simulate_transition)

__version__ = "0.1.0"
