"""End-to-end acceptance checks.

Each test prints one verdict line ("acceptance N PASS/FAIL: ...") with
the measured numbers, so a captured run log doubles as a results table.
Thresholds are fixed here, not tuned: a FAIL line means the property is
broken, not that a knob wants adjusting.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import ensemble_objective, ensemble_params
from ttsa.chains import find_chain, validate_chain
from ttsa.cli import main
from ttsa.config import DEFAULT_CONFIG
from ttsa.diagnostics import (closeness_sup, closeness_trace,
                              graph_containment_trace)
from ttsa.heavy_ball import (HeavyBallParams, membership, quadratic_sum,
                             reduced_heavy_ball)
from ttsa.hybrid_time import jbar, kbar
from ttsa.registry import build_instance
from ttsa.schedules import (StepSchedule, TwoTimescaleSchedule, index_set,
                            m_of, nesting_threshold, tau)
from ttsa.simulate import DriftOracle, run
from ttsa.systems import Box, TwoTimescaleSystem


def _verdict(num: int, ok: bool, detail: str) -> None:
    print(f"acceptance {num:2d} {'PASS' if ok else 'FAIL'}: {detail}")


# -- 1: deterministic runs have exactly vanishing discrepancies ---------


def test_deterministic_closeness_vanishes():
    t0 = time.perf_counter()
    instance = build_instance("hhb", quadratic_sum(2, 4, seed=7),
                              HeavyBallParams(kappa=1.0, dwell=0.5))
    schedules = TwoTimescaleSchedule(StepSchedule.power_law(1.0, 1.0, 1.0),
                                     StepSchedule.power_law(1.0, 1.0, 0.6))
    sim = run(instance.system, schedules, instance.x0, 10_000,
              fast_oracle=instance.fast_oracle, mode="deterministic")
    worst = 0.0
    for timescale in ("slow", "fast"):
        for T in (0.5, 1.0, 5.0):
            trace = closeness_trace(sim, timescale, T=T)
            worst = max(worst, float(np.max(trace.sup)))
    graph = graph_containment_trace(sim)
    elapsed = time.perf_counter() - t0
    ok = (worst <= 1e-12 and graph.flow_max == 0.0 and graph.jump_max == 0.0
          and elapsed < 5.0)
    _verdict(1, ok, f"closeness sup {worst:.1e} (cap 1e-12) over 2 timescales"
             f" x 3 horizons x full window grid, graph distances"
             f" {graph.flow_max:.1e}/{graph.jump_max:.1e} (want exact 0),"
             f" {len(sim.jump_log)} jumps, {elapsed:.2f}s (cap 5s)")
    assert worst <= 1e-12
    assert graph.flow_max == 0.0
    assert graph.jump_max == 0.0
    assert elapsed < 5.0


# -- 2: fast windows nest inside slow windows past the threshold --------


def test_window_nesting_exhaustive():
    t0 = time.perf_counter()
    thresholds = []
    for T in (0.5, 1.0, 10.0):
        schedules = TwoTimescaleSchedule(StepSchedule.power_law(1.0, 1.0, 1.0),
                                         StepSchedule.power_law(1.0, 1.0, 0.6))
        ell = nesting_threshold(schedules, T)
        slow = schedules.of("slow")
        fast = schedules.of("fast")
        for n in range(ell, ell + 1001):
            window = index_set(fast, n, T)
            assert len(window) > 0
            cutoff = tau(slow, n) + T
            assert tau(slow, n + 1) <= cutoff
            assert tau(slow, window[-1]) <= cutoff
        thresholds.append((T, ell))
    elapsed = time.perf_counter() - t0
    ok = elapsed < 5.0
    joined = ", ".join(f"T={T:g}: {ell}" for T, ell in thresholds)
    _verdict(2, ok, f"thresholds {joined}; nonempty nested windows verified"
             f" on [threshold, threshold+1000] at each horizon,"
             f" {elapsed:.2f}s (cap 5s)")
    assert ok


# -- 3: the stochastic ensemble converges to the minimizer set ----------


def test_stochastic_ensemble_converges(ensemble):
    median = float(np.median(ensemble.window_means))
    worst = float(np.max(ensemble.window_means))
    runtime = ensemble.sim_seconds + ensemble.window_metric_seconds
    ok = median <= 0.05 and worst <= 0.15 and runtime < 60.0
    _verdict(3, ok, f"final-1%-window distance to the minimizer set:"
             f" median {median:.2e} (cap 0.05), worst seed {worst:.2e}"
             f" (cap 0.15), 10-seed runtime {runtime:.1f}s (cap 60s)")
    assert median <= 0.05
    assert worst <= 0.15
    assert runtime < 60.0


# -- 4: the tracker pins the full gradient ------------------------------


def test_tracker_pins_gradient(ensemble):
    passing = int(np.count_nonzero(ensemble.tracking_maxes <= 0.05))
    worst = float(np.max(ensemble.tracking_maxes))
    ok = passing >= 9
    _verdict(4, ok, f"final-5%-window max tracking gap <= 0.05 on"
             f" {passing}/10 seeds (need 9), worst seed {worst:.2e}")
    assert passing >= 9


# -- 5: slow drift dies out on the fast clock ---------------------------


def test_boundary_layer_drift_decays(ensemble):
    ratios = ensemble.bl_last / ensemble.bl_first
    ok = bool(np.all(ensemble.bl_last <= 0.2 * ensemble.bl_first))
    _verdict(5, ok, f"rescaled slow-drift decile ratio: worst"
             f" {float(np.max(ratios)):.3f} (cap 0.2) across 10 seeds")
    assert ok


# -- 6: closeness trends decay, and the biased fixture is caught --------


def test_closeness_trend_verdicts(ensemble):
    both = ensemble.trend_slow & ensemble.trend_fast
    passing = int(np.count_nonzero(both))
    biased_passes = ensemble.biased_trend_slow and ensemble.biased_trend_fast
    ok = passing >= 9 and not biased_passes
    _verdict(6, ok, f"slow+fast trend verdicts pass on {passing}/10 seeds"
             f" (need 9); biased fixture rejected: {not biased_passes}"
             f" (biased slow {ensemble.biased_trend_slow},"
             f" fast {ensemble.biased_trend_fast})")
    assert passing >= 9
    assert not biased_passes


# -- 7: recorded noise never exceeds the per-state component bound ------


def test_noise_respects_component_bound(ensemble):
    ok = (ensemble.moment_p == 1.0 and ensemble.noise_violations == 0
          and ensemble.noise_spot_ok and ensemble.noise_min_margin >= 0.0)
    _verdict(7, ok, f"moment order p = {ensemble.moment_p:g};"
             f" {ensemble.noise_violations} violations over 2,000,000"
             f" recorded steps (want 0), min margin"
             f" {ensemble.noise_min_margin:.1e}, scalar-vs-vectorized bound"
             f" spot check {'clean' if ensemble.noise_spot_ok else 'BROKEN'}")
    assert ensemble.moment_p == 1.0
    assert ensemble.noise_violations == 0
    assert ensemble.noise_spot_ok, ensemble.spot_failures
    assert ensemble.noise_min_margin >= 0.0


# -- 8: reduced-system membership equals direct membership in the box ---


def test_reduced_membership_matches_direct(ensemble):
    objective = ensemble_objective()
    params = ensemble_params()
    box = Box(ensemble.box_lo, ensemble.box_hi)
    reduced = reduced_heavy_ball(objective, params, bound=box)
    rng = np.random.default_rng(8)
    center = 0.5 * (ensemble.box_lo + ensemble.box_hi)
    half = 0.75 * (ensemble.box_hi - ensemble.box_lo)
    mismatches = 0
    for _ in range(10_000):
        x = rng.uniform(center - half, center + half)
        full = np.concatenate([x, objective.full_grad(x[:objective.dim])])
        flow_full, jump_full = membership(full, params)
        inside = box.contains(x)
        if (reduced.in_C(x) != (inside and flow_full)
                or reduced.in_D(x) != (inside and jump_full)):
            mismatches += 1
    ok = mismatches == 0
    _verdict(8, ok, f"reduced vs direct membership: {mismatches}/10000"
             f" mismatches on samples from the ensemble box +- 50% margin")
    assert mismatches == 0


# -- 9: solution chains link tail states --------------------------------


def test_chain_construction(ensemble):
    t0 = time.perf_counter()
    decay = build_instance("linear_decay_demo")
    chain_a = find_chain(decay.system.stacked(), np.array([1.0]),
                         np.array([0.0]), tau=1.0, eps=0.5, budget=20)
    check_a = validate_chain(chain_a)

    objective = ensemble_objective()
    params = ensemble_params()
    timers = ensemble.finals[:, 2 * objective.dim]
    start = ensemble.finals[int(np.argmin(timers))]
    target = ensemble.finals[int(np.argmax(timers))]
    margin = 0.25 * (ensemble.box_hi - ensemble.box_lo) + 1e-3
    inner = Box(ensemble.box_lo - margin, ensemble.box_hi + margin)
    reduced = reduced_heavy_ball(objective, params, bound=inner)
    chain_b = find_chain(reduced, start, target, tau=0.5, eps=0.1,
                         budget=200, internal_box=inner)
    check_b = validate_chain(chain_b)
    elapsed = time.perf_counter() - t0
    gap_b = max(chain_b.gaps) if chain_b.gaps else 0.0
    ok = (chain_a.num_legs <= 3 and check_a.ok and check_b.ok
          and elapsed < 30.0)
    _verdict(9, ok, f"scalar-decay chain: {chain_a.num_legs} legs (cap 3);"
             f" reduced-system chain between extreme-timer tail states:"
             f" {chain_b.num_legs} legs (budget 200), max waypoint gap"
             f" {gap_b:.3f} (eps 0.1); both validated; {elapsed:.2f}s"
             f" (cap 30s)")
    assert chain_a.num_legs <= 3
    assert check_a.ok, check_a.problems
    assert check_b.ok, check_b.problems
    assert elapsed < 30.0


# -- 10: window and domain bookkeeping matches brute force --------------


def _brute_tau(sched, k: int) -> float:
    # Fresh compensated sum over h_1..h_k, one term at a time.
    s = 0.0
    c = 0.0
    for i in range(1, k + 1):
        x = float(sched.step(i))
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


def _brute_m_of(sched, t: float, cap: int = 200_000) -> int:
    # Scan k upward until the compensated prefix first exceeds t.
    s = 0.0
    c = 0.0
    k = 0
    while k < cap:
        x = float(sched.step(k + 1))
        tn = s + x
        if abs(s) >= abs(x):
            cn = c + ((s - tn) + x)
        else:
            cn = c + ((x - tn) + s)
        if tn + cn > t:
            return k
        s, c, k = tn, cn, k + 1
    raise AssertionError("brute-force m(t) scan ran past its cap")


def _brute_closeness(sim, timescale: str, n: int, T: float):
    sched = sim.schedule.of(timescale)
    K = sim.num_flow_steps
    cutoff = _brute_tau(sched, n) + T
    if _brute_tau(sched, K) <= cutoff:
        upper, truncated = K, True
    else:
        upper, truncated = _brute_m_of(sched, cutoff), False
    if upper <= n:
        return 0.0, truncated, 0
    h = sim.h(timescale)
    diff = sim.fhat(timescale) - sim.f(timescale)
    acc = np.zeros(diff.shape[1])
    best = 0.0
    for i in range(n, upper):
        acc = acc + h[i] * diff[i]
        best = max(best, float(np.sqrt(np.add.reduce(np.square(acc)))))
    return best, truncated, upper - n


def _random_schedule(rng) -> StepSchedule:
    if rng.random() < 0.7:
        return StepSchedule.power_law(float(rng.uniform(0.3, 1.5)),
                                      float(rng.uniform(0.0, 3.0)),
                                      float(rng.uniform(0.3, 1.2)))
    return StepSchedule.explicit(rng.uniform(0.01, 0.8, size=1200))


def _timer_system(threshold: float) -> TwoTimescaleSystem:
    # Slow block is a timer that jumps back by the threshold; fast block
    # contracts.  Gives runs with irregular, sometimes repeated jumps.
    return TwoTimescaleSystem(
        dims=(1, 1),
        in_C=lambda x: True,
        in_D=lambda x: x[0] >= threshold,
        flow_slow_eval=lambda x: np.ones(1),
        flow_fast_eval=lambda x: -x[1:],
        jump_eval=lambda x: np.array([x[0] - threshold, x[1]]),
        name="timer")


def test_windows_match_brute_force():
    t0 = time.perf_counter()
    point_checks = 0
    domain_checks = 0
    for case in range(100):
        rng = np.random.default_rng(1000 + case)
        schedules = TwoTimescaleSchedule(_random_schedule(rng),
                                         _random_schedule(rng))
        K = int(rng.integers(40, 1001))
        threshold = float(rng.uniform(0.4, 1.5))
        slow_noise = float(rng.uniform(0.0, 0.3))
        fast_noise = float(rng.uniform(0.1, 0.5))
        slow_oracle = DriftOracle(
            mean=lambda x: np.ones(1),
            sample=lambda x, r: np.array([1.0 + slow_noise * r.normal()]))
        fast_oracle = DriftOracle(
            mean=lambda x: -x[1:],
            sample=lambda x, r: -x[1:] + np.array([fast_noise * r.normal()]))
        x0 = np.array([float(rng.uniform(0.0, threshold)),
                       float(rng.uniform(-1.0, 1.0))])
        sim = run(_timer_system(threshold), schedules, x0, K,
                  slow_oracle=slow_oracle, fast_oracle=fast_oracle,
                  seed=case, mode="stochastic")

        for _ in range(3):
            n = int(rng.integers(0, K))
            T = float(rng.uniform(0.1, 2.0))
            for timescale in ("slow", "fast"):
                sched = schedules.of(timescale)
                res = closeness_sup(sim, timescale, n, T)
                sup_b, trunc_b, terms_b = _brute_closeness(sim, timescale, n, T)
                assert res.sup == sup_b
                assert res.truncated == trunc_b
                assert res.num_terms == terms_b
                cutoff = _brute_tau(sched, n) + T
                if _brute_tau(sched, K) <= cutoff:
                    upper_b = K
                else:
                    upper_b = _brute_m_of(sched, cutoff)
                assert index_set(sched, n, T, limit=K) == range(n + 1, upper_b + 1)
                point_checks += 2

        for _ in range(5):
            k = int(rng.integers(0, K + 1))
            for timescale in ("slow", "fast"):
                sched = schedules.of(timescale)
                assert tau(sched, k) == _brute_tau(sched, k)
                t = float(rng.uniform(0.0, 1.0)) * tau(sched, K)
                assert m_of(sched, t) == _brute_m_of(sched, t)
                point_checks += 2

        dom = sim.sequence.domain
        ji = dom.jump_indices
        J = dom.num_jumps

        def valid(k: int, j: int) -> bool:
            if j < 0 or j > J or k < 0:
                return False
            start = 0 if j == 0 else ji[j - 1]
            if j < J:
                end = ji[j]
            else:
                end = math.inf if dom.complete_in_k else dom.k_end
            return start <= k <= end

        for k in range(0, K + 2):
            expect = math.inf
            for j in range(0, J + 1):
                if valid(k + 1, j):
                    expect = j
                    break
            assert jbar(dom, k) == expect
            domain_checks += 1
        for j in range(0, J + 3):
            expect = math.inf
            for k in range(0, dom.k_end + 1):
                if valid(k, j) and valid(k, j + 1):
                    expect = k
                    break
            assert kbar(dom, j) == expect
            domain_checks += 1
    elapsed = time.perf_counter() - t0
    _verdict(10, True, f"closeness_sup, index_set, tau, m_of, jbar, kbar"
             f" match definitional reimplementations bit for bit on 100"
             f" random runs ({point_checks} window queries, {domain_checks}"
             f" domain queries), {elapsed:.1f}s")


# -- 11: identical configs reproduce artifacts byte for byte ------------


ENSEMBLE_INI = """\
[system]
name = hhb_tt

[objective]
family = quadratic_sum
n = 2
N = 10
seed = 3
spread = 0.01

[hhb]
kappa = 1.0
T = 0.5

[schedule.slow]
family = power_law
a = 1.0
b = 1.0
rho = 0.9

[schedule.fast]
family = power_law
a = 1.0
b = 1.0
rho = 0.6

[run]
mode = stochastic
num_flow_steps = 200000
seeds = 0,1,2,3,4,5,6,7,8,9

[diagnostics]
T = 1.0
graph = false
tracking = false
"""


def test_reruns_are_byte_identical(tmp_path):
    t0 = time.perf_counter()
    det_cfg = tmp_path / "det.ini"
    det_cfg.write_text(DEFAULT_CONFIG)
    ens_cfg = tmp_path / "ens.ini"
    ens_cfg.write_text(ENSEMBLE_INI)
    mismatched = []
    compared = 0
    for label, cfg in (("deterministic", det_cfg), ("ensemble", ens_cfg)):
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{label}_{rep}"
            assert main(["simulate", "--config", str(cfg),
                         "--out", str(out), "--quiet"]) == 0
            assert main(["diagnose", "--config", str(cfg),
                         "--out", str(out), "--quiet"]) == 0
            outs.append(out)
        first, second = outs
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        for name in names:
            blob_a = (first / name).read_bytes()
            blob_b = (second / name).read_bytes()
            if name == "manifest.json":
                doc_a = json.loads(blob_a)
                doc_b = json.loads(blob_b)
                doc_a.pop("timestamp")
                doc_b.pop("timestamp")
                if doc_a != doc_b:
                    mismatched.append(f"{label}/{name}")
            elif blob_a != blob_b:
                mismatched.append(f"{label}/{name}")
            compared += 1
    elapsed = time.perf_counter() - t0
    ok = not mismatched
    _verdict(11, ok, f"two full CLI reruns of both benchmark configs:"
             f" {compared} artifacts compared, {len(mismatched)} differ"
             f" (timestamp excluded from the manifests), {elapsed:.0f}s")
    assert not mismatched, mismatched
