"""Bayesian optimisation over mixed, constrained domains.

Additive models for high dimensions, multi-fidelity evaluation and
asynchronous parallel workers, with randomised choice of acquisition
functions and GP hyperparameters.
"""

from .acquisitions import AcqState, acq_value, addgpucb_next, choose_acquisition, ucb_beta, update_weights
from .acq_opt import EAConfig, maximize_acq_ea, maximize_direct
from .benchmarks import Benchmark, benchmark, ea_search, random_search, simple_regret
from .domain import (
    Domain,
    FidelitySpace,
    VariableSpec,
    load_config,
    parse_domain,
    sample_init,
    serialize_domain,
    validate_point,
)
from .estimators import BayesianOptimizer, GPRegressor
from .exceptions import *  # noqa: F401,F403
from .gp import GPModel, fit, hallucinate, joint_sample, log_marginal_likelihood, posterior, posterior_component
from .hyper import HyperOptions, HyperState, choose_hp, gibbs_sample_posterior, maximize_mll, refresh, sample_decompositions
from .kernels import Decomposition, KernelHyperparams, KernelSpec, decomposition_from_ordering, gram_matrix, kernel_eval
from .multifidelity import candidate_fidelities, information_gap, mf_point_and_fidelity, select_fidelity
from .orchestrator import (
    EvalResult,
    Query,
    Report,
    RunOptions,
    RunState,
    SimulatedWorkers,
    ThreadWorkers,
    init_run,
    next_query,
    optimize,
    receive_result,
    run,
)

__version__ = "0.1.0"
