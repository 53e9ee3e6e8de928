"""Composite experiments: correlation runs and parameter-sweep cells."""

from __future__ import annotations

import json
from typing import Any, Mapping

import numpy as np

from .adversary import build_attack_set, exact_miss_curve, fit_exponential
from .analysis import (
    InsufficientDataError,
    alpha_of_config,
    correlation_length,
    crossing_length,
    empirical_autocorrelation,
    exact_autocorrelation,
    fit_correlation_length,
    gap_variance,
    offsets,
)
from .jitter import JitterSpec
from .sampler import SamplingConfig, generate_schedule, validate_config
from .seeding import derive_seed

ALPHA_TABLE = tuple(round(0.05 * k, 2) for k in range(1, 10))
MISS_INTERVALS = tuple(range(5, 45, 5))


def lc_table(alphas=ALPHA_TABLE) -> list[dict[str, float]]:
    """Correlation length against flip probability (closed form)."""
    return [{"alpha": a, "l_c": correlation_length(a)} for a in alphas]


def correlation_run(config: SamplingConfig, seed: int, steps: int, max_lag: int = 10) -> dict[str, Any]:
    """One long schedule: autocorrelation curve, fitted l_c and gap variance."""
    sched = generate_schedule(config, seed, steps)
    alpha = alpha_of_config(config) if config.discrete and config.t == 2 else None
    curve = empirical_autocorrelation(offsets(sched), max_lag, alpha=alpha)
    if alpha is None and config.discrete:
        curve.theoretical = exact_autocorrelation(config, max_lag)
    out: dict[str, Any] = {
        "alpha": alpha,
        "curve": curve,
        "gap_variance": gap_variance(sched),
    }
    try:
        out["l_c_fit"] = fit_correlation_length(curve)
    except InsufficientDataError:
        out["l_c_fit"] = None
    return out


def one_per_interval_miss(config: SamplingConfig, intervals=MISS_INTERVALS, phase: int = 0) -> np.ndarray:
    """Exact miss probability against one fixed offset per interval."""
    t = int(config.t)
    attack = build_attack_set({"kind": "periodic", "period": t, "phase": phase, "width": 1}, max(intervals) * t)
    curve = exact_miss_curve("jwr", config, attack)
    return curve[np.asarray(intervals) - 1]


def cell_config(params: Mapping[str, Any]) -> SamplingConfig:
    if "alpha" in params:
        return SamplingConfig(2, 1, "discrete", JitterSpec.flip(float(params["alpha"])))
    jitter = JitterSpec.from_dict(params.get("jitter"))
    return SamplingConfig(int(params["t"]), int(params["t_p"]), "discrete", jitter)


def sweep_cell(params: Mapping[str, Any], master_seed: int, steps: int, max_lag: int = 10) -> dict[str, Any]:
    """One sweep cell: theory and empirical trade-off numbers for one jitter.

    Cell seeds derive from the cell parameters, not the cell position, so
    editing the grid never perturbs unchanged cells.
    """
    config = validate_config(cell_config(params))
    key = json.dumps(dict(params), sort_keys=True)
    seed = derive_seed(master_seed, f"sweep-cell:{key}")
    run = correlation_run(config, seed, steps, max_lag)
    if run["alpha"] is not None:
        l_c_theory = correlation_length(run["alpha"])
    else:
        l_c_theory = crossing_length(exact_autocorrelation(config, 50 * max_lag))
    miss = one_per_interval_miss(config)
    fit = fit_exponential(MISS_INTERVALS, miss)
    return {
        "params": dict(params),
        "seed": seed,
        "t": config.t,
        "t_p": config.t_p,
        "alpha": run["alpha"],
        "l_c_theory": l_c_theory,
        "autocorr_fit_l_c": run["l_c_fit"],
        "gap_variance_empirical": run["gap_variance"],
        "miss_slope": fit.slope,
        "miss_r2": fit.r2,
    }
