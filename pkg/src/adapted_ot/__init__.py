"""Adapted optimal transport between finite-support discrete-time processes."""

from .causal import (Coupling, CausalLP, bicausal_distance_lp, build_causal_lp,
                     causal_distance, check_causality, symmetrized_causal, two_period_lifted_cw)
from .errors import (AdaptedOTError, CausalityError, DimensionMismatchError,
                     HorizonMismatchError, InfeasibleError, InstanceTooLargeError, SolverError,
                     SupportError)
from .experiments import ConvergenceReport, FamilySpec, make_family, run_convergence
from .nested import (NestedDistribution, ValueTable, iterated_wasserstein, nested_distance,
                     nested_embedding)
from .process import (Distribution, FiniteProcess, MetricSpec, disintegrate, from_paths,
                      marginal, path_cost, pth_moment, random_process, validate)
from .stopping import (RandomizedStoppingRule, RewardProcess, StoppingRule,
                       enumerate_stopping_values, panel_reward, snell_value, stability_bound,
                       transport_stopping_time)
from .topologies import (InformationImage, PredictionProcess, aldous_distance,
                         hellwig_distance, hellwig_map, martingale_check, prediction_process)
from .transport import TransportPlan, TransportProblem, ot_bruteforce, solve_ot, wasserstein

__version__ = "0.1.0"
