"""Step schedules, elapsed time, and nested index windows.

A power-law schedule h_k = a / (k + b)**rho spends its time budget more
slowly the larger rho is.  The window anchored at iteration n collects
the steps whose elapsed time stays within a horizon T of tau_n; when a
fast schedule (small rho) rides along a slow one, its windows
eventually sit inside the slow windows, and the iteration where that
starts is computable.
"""

import numpy as np

from ttsa.schedules import (StepSchedule, TwoTimescaleSchedule,
                            check_fast_moment_condition,
                            check_two_timescale_admissible, index_set, m_of,
                            nesting_threshold, tau)

slow = StepSchedule.power_law(a=1.0, b=1.0, rho=1.0)
fast = StepSchedule.power_law(a=1.0, b=1.0, rho=0.6)
pair = TwoTimescaleSchedule(slow, fast)

print("first five steps")
print("  slow:", np.array([slow.step(k) for k in range(1, 6)]))
print("  fast:", np.array([fast.step(k) for k in range(1, 6)]))

print("\nelapsed time")
for k in (10, 100, 1000):
    print(f"  tau_slow({k:4d}) = {tau(slow, k):7.4f}    "
          f"tau_fast({k:4d}) = {tau(fast, k):8.4f}")

print("\nlargest iteration finishing by a given time")
for t in (2.0, 5.0):
    print(f"  t = {t:g}: m_slow = {m_of(slow, t)}, m_fast = {m_of(fast, t)}")

print("\nwindows anchored at n = 50")
for T in (0.5, 1.0):
    ws = index_set(slow, 50, T)
    wf = index_set(fast, 50, T)
    print(f"  T = {T:g}: slow spans k = {ws.start}..{ws.stop - 1} "
          f"({len(ws)} steps), fast spans k = {wf.start}..{wf.stop - 1} "
          f"({len(wf)} steps), fast inside slow: {wf.stop <= ws.stop}")

print("\nnesting thresholds (fast window inside slow window from here on)")
for T in (0.5, 1.0, 10.0):
    print(f"  T = {T:4g}: n >= {nesting_threshold(pair, T)}")

report = check_two_timescale_admissible(pair)
print(f"\nadmissible pair: {bool(report)} ({report.reason})")

moment = check_fast_moment_condition(fast)
print(f"usable moment order for the fast schedule: p >= {moment.p_min:g}")
print(f"  ({moment.reason})")
