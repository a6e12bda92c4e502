"""Constrained convex optimisation by descent with approximate multipliers and discrete actions."""
from .descent import (DescentConfig, UpdateSchedule, descent_step_direct, descent_step_fw,
                      make_schedule, run_descent, slow_variation_check)
from .problem import (Box, ConvexProblem, Curvature, SeparableStructure, SlaterCertificate,
                      caratheodory_descent_point, check_u_feasible, dual_eval, lagrangian_eval,
                      slater_dual_bound)
from .queues import (IncrementLog, MultiplierState, delayed_multiplier_view, queue_distance_bound,
                     queue_update, running_average_step, skorokhod_closed_form)
from .solvers import (PRESETS, SolverPreset, Trajectory, bounded_multiplier_radius,
                      randomized_action_map, solve, stochastic_arrivals, theorem3_window)
from .tracker import (TrackerState, decompose_to_simplex, select_action, track_sequence,
                      two_timescale_track)

__version__ = "0.1.0"
