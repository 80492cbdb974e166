"""Stochastic simulation inference for dynamic probabilistic networks."""

from .exact import BeliefState, exact_filter, exact_filter_step, exact_marginal, exact_marginals, exact_prior
from .experiments import ExperimentConfig, average_abs_error, reference_network, run_experiment, run_trial
from .network import (
    Cpt,
    DpnModel,
    ModelError,
    Variable,
    ancestral_sample,
    generate_truth_and_evidence,
    likelihood,
    load_model,
    topological_order,
    validate_model,
)
from .reversal import build_reversed_slice, reverse_arc, reverse_model
from .samplers import ALGORITHMS, estimate_marginals, init_samples, resample, run_monitor

__version__ = "0.1.0"
