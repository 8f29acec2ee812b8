"""Adaptive tube MPC with a persistently exciting input component.

The plant input is split as ``u = u_hat + w_hat``: ``u_hat`` comes from a
robust tube MPC regulating the plant, ``w_hat`` from a receding-horizon
excitation problem keeping the data informative for recursive least
squares.  Converged estimates may replace the prediction model after an
admissibility check.
"""

from .adaptation import (PredictionSetup, RedesignBundle, UpdateVerdict, apply_update, full_redesign,
                         redesign_gate, robustified_gate_check, verify_update)
from .estimator import EstimatorState, estimate_error, predict, regressor, rls_update
from .exciter import (ExciterState, PEMatrixReport, output_reachability_check, pe_measure, required_order,
                      solve_pe_step, spe_order_check, state_reachability_check, synthesize_buffer)
from .invariant import (UncertaintyBound, check_admissible, check_rpi, lambda_contractive_set, max_pi_set,
                        mrpi_approx, parametric_bound, terminal_uncertainty_bound)
from .models import ModelFamily, PlantModel
from .polyhedra import (Polytope, contains_point, contains_set, linear_map, minkowski_sum, pontryagin_diff,
                        scale, support, vertices)
from .regulator import (ControllerState, TubeDesign, advance_nominal, build_design, dare_gain,
                        initialize_nominal, schur_check, solve_nominal_mpc, tube_control)
from .sim import (PlantSchedule, ScenarioConfig, SimTrace, compare_baseline, discretize_zoh,
                  run_closed_loop)

__version__ = "0.1.0"
