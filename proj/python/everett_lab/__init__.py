"""Python access to the everett-lab C++ core."""

import json as _json

from ._core import (
    CapacityError,
    binomial_term,
    chebyshev_bound_check,
    coarse_histogram,
    dephasing_overlap,
    envariance_distance,
    estimator_distribution,
    exact_count_density,
    free_packet_width,
    frequency_operator_density,
    gaussian_count_density,
    hartle_variance,
    measure_chain,
    propagate_gaussian,
    relative_frequency_density,
    relative_frequency_peak,
)
from ._core import run_experiment as _run_experiment


def run(config, output_dir=None):
    """Run an experiment from a config dict and return the parsed report."""
    cfg = dict(config)
    if output_dir is not None:
        cfg["output_dir"] = str(output_dir)
    return _json.loads(_run_experiment(_json.dumps(cfg)))


__all__ = [
    "CapacityError",
    "binomial_term",
    "chebyshev_bound_check",
    "coarse_histogram",
    "dephasing_overlap",
    "envariance_distance",
    "estimator_distribution",
    "exact_count_density",
    "free_packet_width",
    "frequency_operator_density",
    "gaussian_count_density",
    "hartle_variance",
    "measure_chain",
    "propagate_gaussian",
    "relative_frequency_density",
    "relative_frequency_peak",
    "run",
]
