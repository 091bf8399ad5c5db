"""Representation transfer across rich-observation MDPs.

Thin wrapper around the C++ core: environment construction, exact DP oracles,
the transfer pipelines, and the experiment harness. Structured results cross
the boundary as JSON.
"""

import json

from ._core import (  # noqa: F401
    BlockMdp,
    Observation,
    Policy,
    Rng,
    Trajectory,
    beta_deployment,
    beta_eps,
    build_comblock,
    coverage_lambda_min_uniform,
    dp_optimal_value,
    dp_uniform_policy_value,
    mle_bound_zeta,
    sample_episode,
    span_identity_error_shared_suite,
    verify_lower_bound_gaps,
    __version__,
)
from . import _core


def run_experiment(config: dict) -> dict:
    """Run an experiment config (same schema as the CLI) and return the manifest."""
    return json.loads(_core.run_experiment_json(json.dumps(config)))


def validate_config(config: dict) -> dict:
    """Validate a config dict, returning its canonical form."""
    return json.loads(_core.validate_config_json(json.dumps(config)))


def transfer_demo(family: str, num_sources: int, horizon: int, seed: int,
                  generative: bool = True, **budgets) -> dict:
    """Small end-to-end transfer run; returns the report as a dict."""
    return json.loads(
        _core.transfer_demo(family, num_sources, horizon, seed, generative, **budgets))
