"""tilecast: minimum-power transmission planning for multicast streaming of
tiled panoramic video over a multi-antenna OFDMA downlink.

The pipeline: viewport geometry tells which tiles each viewer needs; the
exact-audience partition turns shared tiles into multicast messages; per
message and subcarrier a beamformer yields a power quote; an allocator
assigns subcarriers and splits power by water-filling; a successive
convexification pass refines the whole plan for the general antenna count.
"""

from .geometry import TileId, TilingConfig, ViewDirection, compute_tile_set, \
    tile_coverage
from .partition import Message, QualityLadder, TilePartition, \
    build_messages, build_partition, unicast_messages
from .channel import ChannelState, derive_trial_seed, sample_channel
from .cxkernel import as_cvec, axpy_outer, cdot, cnorm
from .beamforming import (BeamPlan, DegenerateChannelError,
                          InfeasibleDirectionError, asymptotic_beam,
                          beam_plan_asymptotic, beam_plan_mrt, mrt_multicast,
                          mrt_unicast, quote_for)
from .ofdma_alloc import (Allocation, InfeasibleAllocationError,
                          NonConvergenceError, assignment_gain,
                          audit_allocation, brute_force_allocation,
                          complete_allocation, solve_quoted_allocation,
                          waterfill_power)
from .dc_solver import (DcDuals, DcState, dc_solve, feasible_beam,
                        initial_point, pair_score, pick_assignment,
                        price_step, priced_rate, solve_convex_approx)
from .harness import (CSV_HEADER, SCHEMES, ScenarioConfig, TrialResult,
                      UserSpec, config_from_dict, config_to_dict,
                      default_config, run_experiment, run_trial,
                      shift_directions, sweep_values)

__version__ = "0.1.0"

__all__ = [
    "TileId", "TilingConfig", "ViewDirection", "compute_tile_set",
    "tile_coverage",
    "Message", "QualityLadder", "TilePartition", "build_messages",
    "build_partition", "unicast_messages",
    "ChannelState", "derive_trial_seed", "sample_channel",
    "as_cvec", "axpy_outer", "cdot", "cnorm",
    "BeamPlan", "DegenerateChannelError", "InfeasibleDirectionError",
    "asymptotic_beam", "beam_plan_asymptotic", "beam_plan_mrt",
    "mrt_multicast", "mrt_unicast", "quote_for",
    "Allocation", "InfeasibleAllocationError", "NonConvergenceError",
    "assignment_gain", "audit_allocation", "brute_force_allocation",
    "complete_allocation", "solve_quoted_allocation", "waterfill_power",
    "DcDuals", "DcState", "dc_solve", "feasible_beam", "initial_point",
    "pair_score", "pick_assignment", "price_step", "priced_rate",
    "solve_convex_approx",
    "CSV_HEADER", "SCHEMES", "ScenarioConfig", "TrialResult", "UserSpec",
    "config_from_dict", "config_to_dict", "default_config",
    "run_experiment", "run_trial", "shift_directions", "sweep_values",
    "__version__",
]
