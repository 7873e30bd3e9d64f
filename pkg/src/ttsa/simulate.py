"""Iterative runs of two-timescale hybrid systems.

The iteration alternates jump-priority jumps with explicit Euler flow
steps whose slow and fast blocks advance with their own step sizes.
Every arrival is recorded on a hybrid domain, together with the drifts
actually applied on each flow step and the comparison drifts the
diagnostics measure against:

  * realized drift (fhat): the vector the step applied, so that the
    state increment equals step size times fhat exactly up to rounding;
  * comparison drift (f): the oracle's mean at the pre-step state when
    sampling is active, otherwise the applied drift itself.

Per-step randomness comes from counter-keyed streams: replaying a run
with the same seed reproduces every draw bit for bit regardless of how
many draws other steps consumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._rng import CounterRng, StepRng
from .hybrid_time import HybridSequence, HybridSequenceDomain
from .schedules import StepSchedule, TwoTimescaleSchedule
from .systems import HybridSystem, TwoTimescaleSystem

__all__ = [
    "DriftOracle",
    "JumpRecord",
    "SimRun",
    "euler_flow_step",
    "step_policy",
    "run",
    "run_single",
    "residuals",
]


@dataclass
class DriftOracle:
    """Mean drift plus an optional per-step sampler.

    Without a sampler the oracle is deterministic and the mean is what
    runs apply.  A sampler receives the state and a dedicated stream and
    returns one noisy drift draw.
    """

    mean: Callable[[np.ndarray], np.ndarray]
    sample: Callable[[np.ndarray, StepRng], np.ndarray] | None = None

    @classmethod
    def deterministic(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "DriftOracle":
        return cls(mean=fn)


@dataclass(frozen=True)
class JumpRecord:
    step: int               # flow-step index at which the jump fired
    level_before: int       # jump counter before the reset
    state_before: np.ndarray
    state_after: np.ndarray


@dataclass
class SimRun:
    """Everything a run produced, in arrival order.

    pre_flow[i] is the state the (i+1)-th flow step started from, after
    any jumps at that index; fhat_*/f_*[i] are the drifts attached to
    that step.  h_slow[i]/h_fast[i] are the step sizes actually applied.
    """

    system: TwoTimescaleSystem
    schedule: TwoTimescaleSchedule
    sequence: HybridSequence
    pre_flow: np.ndarray
    fhat_slow: np.ndarray
    fhat_fast: np.ndarray
    f_slow: np.ndarray
    f_fast: np.ndarray
    h_slow: np.ndarray
    h_fast: np.ndarray
    jump_log: list[JumpRecord] = field(default_factory=list)
    seed: int = 0
    mode: str = "deterministic"

    @property
    def num_flow_steps(self) -> int:
        return self.pre_flow.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        return self.system.dims

    def fhat(self, timescale: str) -> np.ndarray:
        return self.fhat_slow if timescale == "slow" else self.fhat_fast

    def f(self, timescale: str) -> np.ndarray:
        return self.f_slow if timescale == "slow" else self.f_fast

    def h(self, timescale: str) -> np.ndarray:
        return self.h_slow if timescale == "slow" else self.h_fast

    def final_state(self) -> np.ndarray:
        last = max(self.sequence.values)
        return self.sequence.values[last]


def _check_state(x: np.ndarray, k: int, blowup_norm: float) -> None:
    # max/min both propagate NaN, so m is NaN (failing the comparison)
    # exactly when the state is non-finite; avoids the isfinite+abs
    # temporaries on the per-step path
    m = max(float(x.max()), -float(x.min()))
    if not m <= blowup_norm:
        raise RuntimeError(f"numerical blowup at step k={k}")


def euler_flow_step(system: TwoTimescaleSystem, x: np.ndarray,
                    h_slow: float, h_fast: float,
                    slow_drift: np.ndarray, fast_drift: np.ndarray, *,
                    k: int = 0) -> np.ndarray:
    """One explicit Euler update; each block advances with its own step.

    Pure arithmetic on supplied drifts (an oracle mean, a stochastic
    sample, or any other selection); membership is the caller's business.
    """
    ns, nf = system.dims
    out = np.array(x, dtype=float)
    out[:ns] += h_slow * np.asarray(slow_drift, dtype=float)
    out[ns:] += h_fast * np.asarray(fast_drift, dtype=float)
    if not np.all(np.isfinite(out)):
        raise RuntimeError(f"numerical blowup at step k={k}")
    return out


def step_policy(system: TwoTimescaleSystem, x: np.ndarray) -> str:
    """Jump-priority decision: "jump" whenever the jump set holds the
    state, even inside the overlap with the flow set, else "flow".

    Depends only on the current state, so the decision is measurable
    with respect to the run's own history.  A state in neither set
    aborts; clamping it back would corrupt every downstream diagnostic.
    """
    if system.in_D(x):
        return "jump"
    if system.in_C(x):
        return "flow"
    raise RuntimeError("state escaped the flow and jump sets")


def run(system: TwoTimescaleSystem, schedule: TwoTimescaleSchedule,
        x0: np.ndarray, num_flow_steps: int, *,
        slow_oracle: DriftOracle | None = None,
        fast_oracle: DriftOracle | None = None,
        seed: int = 0, mode: str = "stochastic",
        max_consecutive_jumps: int = 10**4,
        blowup_norm: float = 1e12) -> SimRun:
    """Simulate num_flow_steps explicit Euler steps with jump priority.

    At each arrival the jump rule fires repeatedly while the state sits
    in the jump set (bounded by max_consecutive_jumps); once outside, a
    flow step advances the slow block by h_slow[k+1] times the slow
    drift and the fast block by h_fast[k+1] times the fast drift.  A
    state in neither set, a non-finite state, or a norm above
    blowup_norm aborts with an error.

    mode "stochastic" draws from oracle samplers where present (stream
    2k for the slow draw, 2k+1 for the fast one); mode "deterministic"
    applies oracle means everywhere, making the comparison drifts equal
    the applied ones bit for bit.
    """
    if mode not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown run mode: {mode!r}")
    ns, nf = system.dims
    x = np.array(x0, dtype=float)
    if x.shape != (ns + nf,):
        raise ValueError(f"initial state has shape {x.shape}, expected ({ns + nf},)")
    if num_flow_steps < 1:
        raise ValueError("need at least one flow step")
    if slow_oracle is None:
        slow_oracle = DriftOracle(mean=system.flow_slow_eval)
    if fast_oracle is None:
        fast_oracle = DriftOracle(mean=system.flow_fast_eval)

    K = int(num_flow_steps)
    h_s = schedule.slow._steps_block(1, K + 1)
    h_f = schedule.fast._steps_block(1, K + 1)
    pre_flow = np.empty((K, ns + nf))
    fhat_s = np.empty((K, ns))
    fhat_f = np.empty((K, nf))
    f_s = np.empty((K, ns))
    f_f = np.empty((K, nf))

    rng = CounterRng(seed)
    sample_slow = slow_oracle.sample if mode == "stochastic" else None
    sample_fast = fast_oracle.sample if mode == "stochastic" else None

    values: dict[tuple[int, int], np.ndarray] = {}
    jump_indices: list[int] = []
    jump_log: list[JumpRecord] = []
    in_C, in_D = system.in_C, system.in_D
    jump_eval = system.jump_eval

    k, j = 0, 0
    _check_state(x, 0, blowup_norm)
    values[(0, 0)] = x.copy()
    while True:
        consecutive = 0
        while in_D(x):
            x_new = np.asarray(jump_eval(x), dtype=float)
            jump_log.append(JumpRecord(k, j, x.copy(), x_new.copy()))
            j += 1
            jump_indices.append(k)
            x = x_new
            _check_state(x, k, blowup_norm)
            values[(k, j)] = x.copy()
            consecutive += 1
            if consecutive > max_consecutive_jumps:
                raise RuntimeError(
                    f"jump livelock: more than {max_consecutive_jumps} "
                    f"consecutive jumps at step k={k}")
        if k == K:
            break
        if not in_C(x):
            raise RuntimeError(
                f"state escaped the flow and jump sets at step k={k}, jump level j={j}")
        pre_flow[k] = x
        if sample_slow is not None:
            vs = np.asarray(sample_slow(x, rng.step(2 * k)), dtype=float)
            ms = np.asarray(slow_oracle.mean(x), dtype=float)
        else:
            vs = np.asarray(slow_oracle.mean(x), dtype=float)
            ms = vs
        if sample_fast is not None:
            vf = np.asarray(sample_fast(x, rng.step(2 * k + 1)), dtype=float)
            mf = np.asarray(fast_oracle.mean(x), dtype=float)
        else:
            vf = np.asarray(fast_oracle.mean(x), dtype=float)
            mf = vf
        fhat_s[k] = vs
        f_s[k] = ms
        fhat_f[k] = vf
        f_f[k] = mf
        x = x.copy()
        x[:ns] += h_s[k] * vs
        x[ns:] += h_f[k] * vf
        k += 1
        _check_state(x, k, blowup_norm)
        values[(k, j)] = x.copy()

    domain = HybridSequenceDomain(tuple(jump_indices), K)
    sequence = HybridSequence(domain, values)
    return SimRun(system, schedule, sequence, pre_flow, fhat_s, fhat_f,
                  f_s, f_f, h_s, h_f, jump_log, seed, mode)


def run_single(system: HybridSystem, schedule: StepSchedule, x0: np.ndarray,
               num_flow_steps: int, *, oracle: DriftOracle | None = None,
               seed: int = 0, mode: str = "deterministic",
               max_consecutive_jumps: int = 10**4,
               blowup_norm: float = 1e12) -> SimRun:
    """Single-timescale run: the whole state rides the slow block and the
    fast block is empty, so one schedule drives every coordinate.
    """
    wrapped = TwoTimescaleSystem(
        dims=(system.dim, 0),
        in_C=system.in_C,
        in_D=system.in_D,
        flow_slow_eval=system.flow_eval,
        flow_fast_eval=lambda x: np.zeros(0),
        jump_eval=system.jump_eval,
        flow_slow_dist=system.flow_dist,
        jump_dist=system.jump_dist,
        name=system.name,
    )
    return run(wrapped, TwoTimescaleSchedule(schedule, schedule), x0,
               num_flow_steps, slow_oracle=oracle, seed=seed, mode=mode,
               max_consecutive_jumps=max_consecutive_jumps,
               blowup_norm=blowup_norm)


def residuals(sim: SimRun, timescale: str = "fast") -> np.ndarray:
    """Per-step noise fhat - f on one timescale.

    Identically zero whenever the applied drift was the oracle mean
    (deterministic mode, or no sampler on that timescale).
    """
    if timescale not in ("slow", "fast"):
        raise ValueError("timescale must be 'slow' or 'fast'")
    return sim.fhat(timescale) - sim.f(timescale)
