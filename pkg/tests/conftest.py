"""Shared fixtures.

The stochastic ensemble is expensive (ten runs of 2e5 steps), so it is
simulated once per session and reduced to per-seed summaries on the
fly; holding ten full SimRuns alive would cost about a gigabyte.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from ttsa.diagnostics import boundary_layer_rescaled_drift, closeness_trace
from ttsa.heavy_ball import (HeavyBallParams, component_deviation_bound,
                             quadratic_sum)
from ttsa.registry import build_instance
from ttsa.schedules import (StepSchedule, TwoTimescaleSchedule,
                            check_fast_moment_condition)
from ttsa.simulate import run

ENSEMBLE_SEEDS = tuple(range(10))
ENSEMBLE_STEPS = 200_000
ENSEMBLE_DIM = 2
ENSEMBLE_COMPONENTS = 10
ENSEMBLE_OBJECTIVE_SEED = 3
ENSEMBLE_KAPPA = 1.0
ENSEMBLE_DWELL = 0.5
ENSEMBLE_RHO_SLOW = 0.9
ENSEMBLE_RHO_FAST = 0.6


def ensemble_objective():
    return quadratic_sum(ENSEMBLE_DIM, ENSEMBLE_COMPONENTS,
                         seed=ENSEMBLE_OBJECTIVE_SEED)


def ensemble_params():
    return HeavyBallParams(kappa=ENSEMBLE_KAPPA, dwell=ENSEMBLE_DWELL)


def ensemble_schedules():
    return TwoTimescaleSchedule(
        StepSchedule.power_law(1.0, 1.0, ENSEMBLE_RHO_SLOW),
        StepSchedule.power_law(1.0, 1.0, ENSEMBLE_RHO_FAST))


@dataclass
class EnsembleSummary:
    """Per-seed reductions of the ten-seed stochastic benchmark."""

    window_means: np.ndarray        # mean dist_to_M over the final 1% of steps
    tracking_maxes: np.ndarray      # max |xi - grad| over the final 5% of steps
    bl_first: np.ndarray            # rescaled-drift first-decile max
    bl_last: np.ndarray             # rescaled-drift last-decile max
    bl_ok: np.ndarray
    trend_slow: np.ndarray          # closeness trend verdicts at T = 1
    trend_fast: np.ndarray
    biased_trend_slow: bool         # same verdicts on the biased fixture
    biased_trend_fast: bool
    moment_p: float                 # least usable moment order of the fast schedule
    noise_violations: int           # steps with |noise|^(2p) above the state bound
    noise_min_margin: float
    noise_spot_ok: bool             # vectorized bound bitwise-matches the scalar one
    box_lo: np.ndarray              # bounding box of all visited slow states
    box_hi: np.ndarray
    finals: np.ndarray              # (seeds, slow dim) final slow states
    jump_counts: np.ndarray
    sim_seconds: float
    window_metric_seconds: float
    total_seconds: float
    spot_failures: list = field(default_factory=list)


def _noise_bound_rows(anchors: np.ndarray, qs: np.ndarray, p: float) -> np.ndarray:
    # Vectorized component_deviation_bound over rows of qs.  Reductions
    # mirror the scalar version operation for operation so the
    # comparison against recorded residuals stays exact.
    num_components = anchors.shape[0]
    diffs = qs[:, None, :] - anchors[None, :, :]
    mean = np.add.reduce(diffs, axis=1) / num_components
    dev = diffs - mean[:, None, :]
    norm_sq = np.add.reduce(np.square(dev), axis=2)
    return np.max(norm_sq ** p, axis=1)


@pytest.fixture(scope="session")
def ensemble() -> EnsembleSummary:
    t0 = time.perf_counter()
    objective = ensemble_objective()
    params = ensemble_params()
    schedules = ensemble_schedules()
    instance = build_instance("hhb_tt", objective, params)
    dist_fn = instance.metrics["dist_to_M"]
    lam_fn = instance.metrics["lambda_tracking"]

    report = check_fast_moment_condition(schedules.fast)
    assert report.p_min is not None
    p = report.p_min

    num_seeds = len(ENSEMBLE_SEEDS)
    slow_dim = 2 * ENSEMBLE_DIM + 1
    window = ENSEMBLE_STEPS // 100
    tracking_window = ENSEMBLE_STEPS // 20

    window_means = np.empty(num_seeds)
    tracking_maxes = np.empty(num_seeds)
    bl_first = np.empty(num_seeds)
    bl_last = np.empty(num_seeds)
    bl_ok = np.zeros(num_seeds, dtype=bool)
    trend_slow = np.zeros(num_seeds, dtype=bool)
    trend_fast = np.zeros(num_seeds, dtype=bool)
    finals = np.empty((num_seeds, slow_dim))
    jump_counts = np.zeros(num_seeds, dtype=int)
    box_lo = np.full(slow_dim, np.inf)
    box_hi = np.full(slow_dim, -np.inf)

    violations = 0
    min_margin = np.inf
    spot_ok = True
    spot_failures = []
    spot_rng = np.random.default_rng(2026)

    sim_seconds = 0.0
    metric_seconds = 0.0

    for i, seed in enumerate(ENSEMBLE_SEEDS):
        t_sim = time.perf_counter()
        sim = run(instance.system, schedules, instance.x0, ENSEMBLE_STEPS,
                  fast_oracle=instance.fast_oracle, seed=seed,
                  mode="stochastic")
        sim_seconds += time.perf_counter() - t_sim

        t_metric = time.perf_counter()
        tail = sim.pre_flow[-window:]
        window_means[i] = float(np.mean([dist_fn(x) for x in tail]))
        metric_seconds += time.perf_counter() - t_metric

        track_tail = sim.pre_flow[-tracking_window:]
        tracking_maxes[i] = float(max(lam_fn(x) for x in track_tail))

        bl = boundary_layer_rescaled_drift(sim)
        bl_first[i] = bl.first_decile_max
        bl_last[i] = bl.last_decile_max
        bl_ok[i] = bl.ok

        trend_slow[i] = closeness_trace(sim, "slow", T=1.0).trend_ok
        trend_fast[i] = closeness_trace(sim, "fast", T=1.0).trend_ok

        qs = sim.pre_flow[:, :ENSEMBLE_DIM]
        bounds = _noise_bound_rows(objective.anchors, qs, p)
        noise = sim.fhat_fast - sim.f_fast
        noise_pow = np.add.reduce(np.square(noise), axis=1) ** p
        violations += int(np.count_nonzero(~(noise_pow <= bounds)))
        min_margin = min(min_margin, float(np.min(bounds - noise_pow)))
        for k in spot_rng.integers(0, ENSEMBLE_STEPS, size=20):
            scalar = component_deviation_bound(objective, p, qs[k])
            if scalar != bounds[k]:
                spot_ok = False
                spot_failures.append((seed, int(k), scalar, float(bounds[k])))

        slow_states = sim.pre_flow[:, :slow_dim]
        box_lo = np.minimum(box_lo, slow_states.min(axis=0))
        box_hi = np.maximum(box_hi, slow_states.max(axis=0))
        final = sim.final_state()[:slow_dim]
        finals[i] = final
        box_lo = np.minimum(box_lo, final)
        box_hi = np.maximum(box_hi, final)
        jump_counts[i] = len(sim.jump_log)
        del sim

    biased = build_instance("hhb_tt_biased", objective, params, bias=0.1)
    biased_sim = run(biased.system, schedules, biased.x0, ENSEMBLE_STEPS,
                     fast_oracle=biased.fast_oracle, seed=0,
                     mode="stochastic")
    biased_slow = closeness_trace(biased_sim, "slow", T=1.0).trend_ok
    biased_fast = closeness_trace(biased_sim, "fast", T=1.0).trend_ok
    del biased_sim

    return EnsembleSummary(
        window_means=window_means,
        tracking_maxes=tracking_maxes,
        bl_first=bl_first,
        bl_last=bl_last,
        bl_ok=bl_ok,
        trend_slow=trend_slow,
        trend_fast=trend_fast,
        biased_trend_slow=biased_slow,
        biased_trend_fast=biased_fast,
        moment_p=p,
        noise_violations=violations,
        noise_min_margin=float(min_margin),
        noise_spot_ok=spot_ok,
        box_lo=box_lo,
        box_hi=box_hi,
        finals=finals,
        jump_counts=jump_counts,
        sim_seconds=sim_seconds,
        window_metric_seconds=metric_seconds,
        total_seconds=time.perf_counter() - t0,
        spot_failures=spot_failures,
    )
