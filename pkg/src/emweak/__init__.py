"""Weak Euler-Maruyama approximation for SDEs with constant diffusion and irregular drift."""

from .catalogue import BUILTINS, get_builtin, list_builtins, make_functional
from .em import Grid, GridPath, evaluate_functional, simulate_bm_path, simulate_em_path
from .girsanov import (WeightAccumulator, accumulate_weight_step, coupled_weak_error_estimate,
                       girsanov_identity_check, weight_moment_diagnostic, weighted_payoff_estimate)
from .killed import (discrete_exit_time, killed_bias_ladder, killed_identity_test, killed_payoff_estimate,
                     reference_exit_probability, reference_survival_probability)
from .mc import LadderPoint, McEstimate, RateReport, fit_rate, run_mc, weak_error_vs_reference
from .model import (ConstantDiffusion, DomainSpec, DriftSpec, GrowthClass, PathFunctional, SdeProblem,
                    inverse_diffusion, predicted_weak_order, validate_problem)
from .reflected import (ReflectedState, reflected_em_step, simulate_reflected_em_path,
                        skorohod_map_discrete)
from .sampling import (RngStream, exponential_variate, gaussian_vector, sample_running_maximum)

__version__ = "0.1.0"
