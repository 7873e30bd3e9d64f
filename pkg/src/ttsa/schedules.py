"""Step-size schedules and the bookkeeping built on their partial sums.

A schedule assigns a positive step h_k to every iteration k >= 1.  The
running total tau_k of the first k steps plays the role of elapsed
algorithmic time; m_of inverts it (largest k whose total stays below a
given time), and index windows {n+1, ..., m(tau_n + T)} collect the
iterations that fit into a time window of width T starting at n.

Partial sums are cached with compensated (Neumaier) summation and grown
on demand, so tau_k stays correctly rounded even for very long runs and
cached values never depend on query order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "StepSchedule",
    "TwoTimescaleSchedule",
    "AdmissibilityReport",
    "TwoTimescaleAdmissibilityReport",
    "MomentConditionReport",
    "NestingThresholdError",
    "tau",
    "m_of",
    "check_admissible",
    "check_two_timescale_admissible",
    "check_fast_moment_condition",
    "index_set",
    "nesting_threshold",
]

# Finite-horizon surrogates used by the heuristic (non power-law) checks.
_DECAY_RATIO_MAX = 0.5      # last-decile mean over first-decile mean of h
_TAIL_GROWTH_MIN = 0.05     # relative growth of tau over the second half
_RATIO_DECAY_MAX = 0.2      # decile ratio for the slow/fast step ratio
_MOMENT_TAIL_MAX = 0.01     # relative tail growth of sum h^(1+p)
_MOMENT_P_GRID = (1.0, 1.5, 2.0, 3.0, 4.0, 8.0)

_DEFAULT_SEARCH_CAP = 10**8


class NestingThresholdError(RuntimeError):
    """Raised when no index works; carries the first violating n."""

    def __init__(self, first_violation: int, message: str):
        super().__init__(message)
        self.first_violation = first_violation


def _neumaier_extend(h: np.ndarray, s: float, c: float, out: np.ndarray) -> tuple[float, float]:
    # Sequential compensated summation; out[i] = correctly rounded prefix.
    for i in range(h.shape[0]):
        x = h[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
        out[i] = s + c
    return s, c


class StepSchedule:
    """Positive step sizes h_k, k >= 1, with cached compensated prefix sums.

    Families:
      power_law  h_k = a / (k + b)**rho
      explicit   h_k read from a finite list
      user_rule  h_k = rule(k) for a user callable
    """

    def __init__(self, family: str, *, a: float | None = None, b: float | None = None,
                 rho: float | None = None, values: np.ndarray | None = None,
                 rule: Callable[[int], float] | None = None):
        self.family = family
        if family == "power_law":
            if a is None or b is None or rho is None:
                raise ValueError("power_law schedule needs a, b, rho")
            if a <= 0:
                raise ValueError("power_law coefficient a must be positive")
            if b < 0:
                raise ValueError("power_law offset b must be nonnegative")
            if rho <= 0:
                raise ValueError("power_law exponent rho must be positive")
            self.a, self.b, self.rho = float(a), float(b), float(rho)
            self.values = None
            self.rule = None
        elif family == "explicit":
            if values is None or len(values) == 0:
                raise ValueError("explicit schedule needs a nonempty value list")
            self.values = np.asarray(values, dtype=float)
            self.a = self.b = self.rho = None
            self.rule = None
        elif family == "user_rule":
            if rule is None:
                raise ValueError("user_rule schedule needs a callable")
            self.rule = rule
            self.values = None
            self.a = self.b = self.rho = None
        else:
            raise ValueError(f"unknown schedule family: {family!r}")
        # tau cache: _tau[k] = sum of the first k steps, _tau[0] = 0
        self._tau = np.zeros(1)
        self._s = 0.0
        self._c = 0.0

    @classmethod
    def power_law(cls, a: float = 1.0, b: float = 1.0, rho: float = 1.0) -> "StepSchedule":
        return cls("power_law", a=a, b=b, rho=rho)

    @classmethod
    def explicit(cls, values) -> "StepSchedule":
        return cls("explicit", values=values)

    @classmethod
    def user_rule(cls, rule: Callable[[int], float]) -> "StepSchedule":
        return cls("user_rule", rule=rule)

    # -- step evaluation ------------------------------------------------

    @property
    def max_steps(self) -> int | None:
        """Number of defined steps, None when unbounded."""
        return len(self.values) if self.family == "explicit" else None

    def _steps_block(self, lo: int, hi: int) -> np.ndarray:
        """Steps h_k for k in [lo, hi); validates positivity."""
        if self.family == "power_law":
            k = np.arange(lo, hi, dtype=float)
            return self.a / (k + self.b) ** self.rho
        if self.family == "explicit":
            if hi - 1 > len(self.values):
                raise ValueError(
                    f"explicit schedule exhausted: step {hi - 1} of {len(self.values)}")
            block = self.values[lo - 1:hi - 1]
        else:
            block = np.array([float(self.rule(k)) for k in range(lo, hi)])
        bad = np.nonzero(~(block > 0.0))[0]
        if bad.size:
            raise ValueError(f"nonpositive step at k={lo + int(bad[0])}")
        return block

    def step(self, k: int) -> float:
        """Step h_k (k >= 1)."""
        if k < 1:
            raise ValueError("steps are defined for k >= 1")
        return float(self._steps_block(k, k + 1)[0])

    # -- prefix sums ----------------------------------------------------

    def _cached_len(self) -> int:
        return len(self._tau) - 1

    def _ensure(self, k: int) -> None:
        """Grow the tau cache so tau_k is available."""
        have = self._cached_len()
        if k <= have:
            return
        if self.max_steps is not None and k > self.max_steps:
            raise ValueError(
                f"explicit schedule exhausted: step {k} of {self.max_steps}")
        target = max(k, 2 * have, 256)
        if self.max_steps is not None:
            target = min(target, self.max_steps)
        block = self._steps_block(have + 1, target + 1)
        out = np.empty(len(block))
        self._s, self._c = _neumaier_extend(block, self._s, self._c, out)
        self._tau = np.concatenate([self._tau, out])

    def tau_array(self, k: int) -> np.ndarray:
        """View of cached sums tau_0..tau_k."""
        self._ensure(k)
        return self._tau[:k + 1]


@dataclass(frozen=True)
class TwoTimescaleSchedule:
    """A slow and a fast schedule evolved side by side."""

    slow: StepSchedule
    fast: StepSchedule

    def of(self, timescale: str) -> StepSchedule:
        if timescale == "slow":
            return self.slow
        if timescale == "fast":
            return self.fast
        raise ValueError("timescale must be 'slow' or 'fast'")


def tau(sched: StepSchedule, k: int) -> float:
    """Elapsed time after k steps: the sum of h_1..h_k (tau_0 = 0)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    sched._ensure(k)
    return float(sched._tau[k])


def m_of(sched: StepSchedule, t: float, search_cap: int = _DEFAULT_SEARCH_CAP) -> int:
    """Largest k with tau_k <= t.

    Grows the cached sums geometrically until they pass t, then binary
    searches.  Raises once the cache would exceed search_cap (or the
    schedule runs out of steps) without passing t.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    while float(sched._tau[-1]) <= t:
        have = sched._cached_len()
        limit = search_cap if sched.max_steps is None else min(search_cap, sched.max_steps)
        if have >= limit:
            raise ValueError(f"m(t) search cap exceeded at k={have} for t={t}")
        sched._ensure(min(max(2 * have, 256), limit))
    return int(np.searchsorted(sched._tau, t, side="right")) - 1


def _window_upper(sched: StepSchedule, n: int, T: float,
                  limit: int | None = None) -> tuple[int, bool]:
    """Upper end m(tau_n + T) of the index window, optionally truncated at limit."""
    t = tau(sched, n) + T
    if limit is not None:
        sched._ensure(limit)
        if float(sched._tau[limit]) <= t:
            return limit, True
        upper = int(np.searchsorted(sched._tau[:limit + 1], t, side="right")) - 1
        return upper, False
    return m_of(sched, t), False


def index_set(sched: StepSchedule, n: int, T: float, limit: int | None = None) -> range:
    """Iterations k with n+1 <= k <= m(tau_n + T); possibly empty.

    With limit set, the window is clipped to k <= limit (used when a
    recorded run is shorter than the full window).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if T <= 0:
        raise ValueError("T must be positive")
    upper, _ = _window_upper(sched, n, T, limit)
    return range(n + 1, upper + 1)


# -- admissibility ------------------------------------------------------


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    analytic: bool            # closed-form decision vs finite-horizon heuristic
    reason: str
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.admissible


def check_admissible(sched: StepSchedule, horizon: int = 1000) -> AdmissibilityReport:
    """Decide whether steps are positive, vanishing, and non-summable.

    Power-law schedules are decided in closed form: admissible exactly
    when rho <= 1 (steps vanish since rho > 0, and the series diverges
    iff rho <= 1).  Other families get finite-horizon trend tests and the
    report is flagged non-analytic.
    """
    if sched.family == "power_law":
        ok = sched.rho <= 1.0
        reason = ("power law with rho in (0, 1]: vanishing, non-summable steps"
                  if ok else "power law with rho > 1 has summable steps")
        return AdmissibilityReport(ok, True, reason,
                                   {"rho": sched.rho, "a": sched.a, "b": sched.b})
    if sched.max_steps is not None:
        horizon = min(horizon, sched.max_steps)
    if horizon < 20:
        return AdmissibilityReport(False, False,
                                   f"horizon {horizon} too short to judge trends", {})
    h = sched._steps_block(1, horizon + 1)
    d = max(horizon // 10, 1)
    head_mean = float(h[:d].mean())
    tail_mean = float(h[-d:].mean())
    decay_ratio = tail_mean / head_mean
    to_zero = decay_ratio <= _DECAY_RATIO_MAX
    half = tau(sched, horizon // 2)
    full = tau(sched, horizon)
    tail_growth = (full - half) / half if half > 0 else math.inf
    diverges = tail_growth >= _TAIL_GROWTH_MIN
    ok = to_zero and diverges
    if not to_zero:
        reason = f"steps do not trend to zero (decile ratio {decay_ratio:.3g})"
    elif not diverges:
        reason = f"partial sums look summable (tail growth {tail_growth:.3g})"
    else:
        reason = "steps trend to zero and partial sums keep growing (heuristic)"
    return AdmissibilityReport(ok, False, reason, {
        "horizon": horizon,
        "decay_ratio": decay_ratio,
        "tail_growth": tail_growth,
    })


@dataclass(frozen=True)
class TwoTimescaleAdmissibilityReport:
    admissible: bool
    analytic: bool
    reason: str
    slow: AdmissibilityReport
    fast: AdmissibilityReport
    ratio_k: np.ndarray       # sampled iterations
    ratio: np.ndarray         # h_slow / h_fast at those iterations

    def __bool__(self) -> bool:
        return self.admissible


def check_two_timescale_admissible(ts: TwoTimescaleSchedule,
                                   horizon: int = 1000) -> TwoTimescaleAdmissibilityReport:
    """Both schedules admissible and the slow/fast step ratio vanishing."""
    slow_rep = check_admissible(ts.slow, horizon)
    fast_rep = check_admissible(ts.fast, horizon)
    for s in (ts.slow, ts.fast):
        if s.max_steps is not None:
            horizon = min(horizon, s.max_steps)
    ks = np.unique(np.geomspace(1, horizon, min(64, horizon)).astype(int))
    hs = np.array([ts.slow.step(int(k)) for k in ks])
    hf = np.array([ts.fast.step(int(k)) for k in ks])
    ratio = hs / hf
    if ts.slow.family == "power_law" and ts.fast.family == "power_law":
        analytic = True
        ratio_ok = ts.slow.rho > ts.fast.rho
        ratio_reason = ("slow exponent exceeds fast exponent, ratio vanishes"
                        if ratio_ok else "slow/fast step ratio does not vanish")
    else:
        analytic = False
        d = max(len(ks) // 10, 1)
        decay = float(ratio[-d:].mean()) / float(ratio[:d].mean())
        ratio_ok = decay <= _RATIO_DECAY_MAX
        ratio_reason = f"ratio decile decay {decay:.3g} (heuristic)"
    ok = bool(slow_rep) and bool(fast_rep) and ratio_ok
    if not slow_rep:
        reason = f"slow schedule: {slow_rep.reason}"
    elif not fast_rep:
        reason = f"fast schedule: {fast_rep.reason}"
    else:
        reason = ratio_reason
    analytic_all = analytic and slow_rep.analytic and fast_rep.analytic
    return TwoTimescaleAdmissibilityReport(ok, analytic_all, reason,
                                           slow_rep, fast_rep, ks, ratio)


@dataclass(frozen=True)
class MomentConditionReport:
    p_min: float | None       # least usable moment order, None if none found
    analytic: bool
    satisfied_strictly: bool | None
    reason: str

    def __bool__(self) -> bool:
        return self.p_min is not None


def check_fast_moment_condition(fast: StepSchedule, horizon: int = 2000) -> MomentConditionReport:
    """Least p >= 1 making the series of h_k^(1+p) summable.

    For a power law with exponent rho the requirement is (1+p)*rho > 1,
    so the infimum is max(1, 1/rho - 1); the report notes whether that
    boundary value itself satisfies the strict inequality.  Other
    families are probed on a grid of p values with a tail-growth test.
    """
    if fast.family == "power_law":
        p = max(1.0, 1.0 / fast.rho - 1.0)
        strict = (1.0 + p) * fast.rho > 1.0
        reason = f"power law: (1+p)*rho > 1 requires p >= {p:g}"
        return MomentConditionReport(p, True, strict, reason)
    horizon = min(horizon, fast.max_steps or horizon)
    h = fast._steps_block(1, horizon + 1)
    for p in _MOMENT_P_GRID:
        powers = h ** (1.0 + p)
        half = float(powers[:horizon // 2].sum())
        full = float(powers.sum())
        if half > 0 and (full - half) / half <= _MOMENT_TAIL_MAX:
            return MomentConditionReport(
                p, False, None, f"tail of sum h^(1+p) flat at p={p:g} (heuristic)")
    return MomentConditionReport(None, False, None,
                                 "no grid p showed a summable-looking tail")


def nesting_threshold(ts: TwoTimescaleSchedule, T: float, search_cap: int = 2000) -> int:
    """Least index from which fast windows nest inside slow windows.

    Returns the smallest l <= search_cap such that for every n from l to
    search_cap both index windows {n+1..m(tau_n+T)} are nonempty and the
    fast window is contained in the slow one.  Containment is decided by
    comparing slow elapsed time at the fast window's end against the slow
    window budget, which avoids materializing the (possibly enormous)
    slow window itself.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    cap = int(search_cap)
    tau_f = ts.fast.tau_array(cap + 1).copy()
    # fast window uppers for all n <= cap
    targets = tau_f[:cap + 1] + T
    while float(ts.fast._tau[-1]) <= float(targets[-1]):
        have = ts.fast._cached_len()
        limit = _DEFAULT_SEARCH_CAP if ts.fast.max_steps is None else ts.fast.max_steps
        if have >= limit:
            raise ValueError(f"m(t) search cap exceeded at k={have} for t={targets[-1]}")
        ts.fast._ensure(min(max(2 * have, 256), limit))
    uf = np.searchsorted(ts.fast._tau, targets, side="right") - 1
    tau_s = ts.slow.tau_array(max(int(uf.max()), cap + 1))
    n = np.arange(cap + 1)
    fast_nonempty = uf >= n + 1
    slow_budget = tau_s[:cap + 1] + T
    slow_nonempty = tau_s[n + 1] <= slow_budget
    # fast upper inside the slow window: tau_slow at that index within budget
    nested = tau_s[uf] <= slow_budget
    ok = fast_nonempty & slow_nonempty & nested
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return 0
    if int(bad[-1]) >= cap:
        raise NestingThresholdError(
            int(bad[0]),
            f"no nesting threshold below cap {cap}; first violation at n={int(bad[0])}")
    return int(bad[-1]) + 1
