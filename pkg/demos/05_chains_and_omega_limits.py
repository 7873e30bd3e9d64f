"""Linking tail states with solution chains.

A chain is a finite sequence of simulated solution legs whose endpoints
agree within eps; finding one between two points is constructive
evidence that the second is reachable from a neighborhood of the first.
The tail of a long run estimates the accumulation set, and a weak
invariance spot check probes whether arcs started there can stay there.
"""

import numpy as np

from ttsa.chains import find_chain, validate_chain, weak_invariance_spot_check
from ttsa.heavy_ball import HeavyBallParams, quadratic_sum, reduced_heavy_ball
from ttsa.hybrid_time import omega_limit_estimate
from ttsa.registry import build_instance
from ttsa.schedules import StepSchedule, TwoTimescaleSchedule
from ttsa.simulate import run
from ttsa.systems import Box

# scalar contraction: two legs of coasting reach any eps-ball of 0
decay = build_instance("linear_decay_demo")
chain = find_chain(decay.system.stacked(), np.array([1.0]), np.array([0.0]),
                   tau=1.0, eps=0.5, budget=20)
print(f"scalar decay, 1 -> 0 with eps = 0.5: {chain.num_legs} leg(s), "
      f"endpoint gaps {[f'{g:.3f}' for g in chain.gaps]}, "
      f"valid = {validate_chain(chain).ok}")

# estimate the accumulation set of two long momentum runs
objective = quadratic_sum(dim=2, num_components=10, seed=3)
params = HeavyBallParams(kappa=1.0, dwell=0.5)
instance = build_instance("hhb_tt", objective, params)
schedules = TwoTimescaleSchedule(StepSchedule.power_law(1.0, 1.0, 0.9),
                                 StepSchedule.power_law(1.0, 1.0, 0.6))
finals = []
cloud = None
for seed in (0, 1):
    sim = run(instance.system, schedules, instance.x0, 20_000,
              fast_oracle=instance.fast_oracle, seed=seed, mode="stochastic")
    cloud = omega_limit_estimate(sim.sequence, tail_fraction=0.05)
    slow_dim = 2 * objective.dim + 1
    finals.append(sim.final_state()[:slow_dim])
    print(f"seed {seed}: tail clusters to {cloud.shape[0]} point(s), "
          f"first at {np.round(cloud[0], 4)}")

report = weak_invariance_spot_check(instance.system.stacked(), cloud,
                                    eps=0.5, min_duration=0.2)
print(f"weak invariance spot check on the last cloud: "
      f"{report.fraction_ok:.0%} of points revisited by a qualifying arc "
      f"({report.num_arcs} arc(s))")

# chain between the two runs' final slow states on the reduced system;
# jumps cannot fire while the timer is below the dwell time, so aim
# from the lower timer at the higher one
finals = np.array(finals)
finals = finals[np.argsort(finals[:, 2 * objective.dim])]
pts = np.concatenate([finals, np.array([instance.x0[:5]])])
box = Box(pts.min(axis=0), pts.max(axis=0)).inflate(0.5)
reduced = reduced_heavy_ball(objective, params, bound=box)
chain = find_chain(reduced, finals[0], finals[1], tau=0.5, eps=0.25,
                   budget=300, internal_box=box)
print(f"reduced-system chain between the two tail states: "
      f"{chain.num_legs} leg(s), max gap = {max(chain.gaps):.3f}, "
      f"valid = {validate_chain(chain).ok}")
