"""Sampled gradients on two clocks, converging to the minimizer set.

The fast block tracks the full gradient from single-component samples
while the slow block runs momentum descent against the tracked value.
Step sizes decay at different rates (rho = 0.9 slow, 0.6 fast), so the
tracker equilibrates between consecutive slow moves.
"""

import numpy as np

from ttsa.diagnostics import closeness_trace
from ttsa.heavy_ball import HeavyBallParams, quadratic_sum
from ttsa.registry import build_instance
from ttsa.schedules import StepSchedule, TwoTimescaleSchedule
from ttsa.simulate import run

objective = quadratic_sum(dim=2, num_components=10, seed=3)
instance = build_instance("hhb_tt", objective,
                          HeavyBallParams(kappa=1.0, dwell=0.5))
schedules = TwoTimescaleSchedule(StepSchedule.power_law(1.0, 1.0, 0.9),
                                 StepSchedule.power_law(1.0, 1.0, 0.6))
dist_fn = instance.metrics["dist_to_M"]
gap_fn = instance.metrics["lambda_tracking"]

num_steps = 50_000
window = num_steps // 100
print(f"{num_steps} flow steps per seed, window = final {window} steps")
sim = None
for seed in range(3):
    sim = run(instance.system, schedules, instance.x0, num_steps,
              fast_oracle=instance.fast_oracle, seed=seed, mode="stochastic")
    tail = sim.pre_flow[-window:]
    mean_dist = float(np.mean([dist_fn(x) for x in tail]))
    max_gap = float(max(gap_fn(x) for x in tail))
    print(f"  seed {seed}: {len(sim.jump_log):3d} resets, "
          f"window mean distance = {mean_dist:.2e}, "
          f"window max tracking gap = {max_gap:.2e}")

print("\ndiscrepancy trend on the last seed")
print("(passes when the window sups decay or are already negligible)")
for timescale in ("slow", "fast"):
    trace = closeness_trace(sim, timescale, T=1.0)
    last_quartile = float(np.mean(trace.sup[3 * trace.sup.size // 4:]))
    print(f"  {timescale:5s}: decay ratio = {trace.decay:.3f}, "
          f"last-quartile mean = {last_quartile:.1e}, "
          f"verdict = {'pass' if trace.trend_ok else 'fail'}")
