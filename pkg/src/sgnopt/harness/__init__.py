"""Experiment harness: configs, runs, reference optima and envelope checks."""

from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from .envelopes import (
    PreconditionError, check_global_envelope, check_local_linear, estimate_rate, estimate_rho,
    global_envelope, local_rate_b,
)
from .experiment import (
    ExperimentError, ExperimentResult, TraceRecord, build_objective, build_solver_config, compute_fstar,
    read_trace, run_experiment, tune_constant,
)
from .suites import SUITES, SuiteResult, run_suite
