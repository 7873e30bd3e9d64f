"""Diagnostics that compare a recorded run against its limiting behavior.

The central quantity is the closeness discrepancy on a time window: the
running sum of step size times (realized drift minus comparison drift),
measured from a window start n up to each iteration the window admits.
For vanishing steps these sums should shrink as n grows; their supremum
per window is the closeness value.  Companion traces measure distance
of applied increments to the system's flow/jump graphs, the size of the
slow drift rescaled to the fast clock (which should die out when the
timescales separate), and the gap between the fast block and a tracking
map's quasi-steady values.

All thresholds are fixed module constants, never tuned per run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hybrid_time import omega_limit_estimate
from .schedules import _window_upper
from .simulate import SimRun
from .systems import TrackingMap, restricted_graph_distance

__all__ = [
    "ClosenessResult",
    "ClosenessTrace",
    "GraphContainmentTrace",
    "RescaledDriftTrace",
    "TrackingErrorTrace",
    "closeness_sup",
    "closeness_trace",
    "graph_containment_trace",
    "boundary_layer_rescaled_drift",
    "tracking_error_trace",
    "default_n_grid",
    "diagnostics_report",
    "write_report_json",
    "write_trace_csv",
]

_TREND_DECAY_MAX = 0.2    # last-quartile mean over first-quartile mean
_TREND_ABS_TOL = 1e-3     # closeness this small counts as vanished outright
_BL_DECAY_MAX = 0.2       # last-decile max over first-decile max
_TRACK_TOL = 0.05         # tracking gap allowed over the trailing window
_TRACK_TAIL_FRACTION = 0.05
_GRID_POINTS = 32
_GRID_SPAN = (0.1, 0.9)   # default window starts, as fractions of the run


@dataclass(frozen=True)
class ClosenessResult:
    """Supremum of the windowed discrepancy sums from one start index."""

    sup: float
    truncated: bool           # window ran past the recorded steps
    num_terms: int


def closeness_sup(sim: SimRun, timescale: str = "fast", n: int = 0,
                  T: float = 1.0) -> ClosenessResult:
    """Sup over the window {n+1..m(tau_n+T)} of the norm of the running
    sum of h_(i+1) * (fhat_(i+1) - f_i), accumulated from i = n.

    Sums are accumulated sequentially in recording order, so results are
    reproducible against a definitional per-step reimplementation.  The
    window is clipped to the recorded steps; the flag reports clipping.
    """
    if timescale not in ("slow", "fast"):
        raise ValueError("timescale must be 'slow' or 'fast'")
    if n < 0:
        raise ValueError("n must be nonnegative")
    sched = sim.schedule.of(timescale)
    K = sim.num_flow_steps
    upper, truncated = _window_upper(sched, n, T, limit=K)
    if upper <= n:
        return ClosenessResult(0.0, truncated, 0)
    rows = sim.h(timescale)[n:upper, None] * (sim.fhat(timescale)[n:upper]
                                              - sim.f(timescale)[n:upper])
    prefix = np.add.accumulate(rows, axis=0)
    norms = np.sqrt(np.add.reduce(np.square(prefix), axis=1))
    return ClosenessResult(float(np.max(norms)), truncated, upper - n)


def default_n_grid(num_flow_steps: int) -> np.ndarray:
    """Window starts spread geometrically over the middle of a run."""
    lo = max(1, int(_GRID_SPAN[0] * num_flow_steps))
    hi = max(lo, int(_GRID_SPAN[1] * num_flow_steps))
    return np.unique(np.geomspace(lo, hi, _GRID_POINTS).astype(int))


def _trend_verdict(sups: np.ndarray) -> tuple[bool, float]:
    """Pass when late windows shrink against early ones or are tiny outright."""
    q = max(len(sups) // 4, 1)
    first = float(np.mean(sups[:q]))
    last = float(np.mean(sups[-q:]))
    if first > 0:
        decay = last / first
    else:
        decay = 0.0 if last == 0 else math.inf
    ok = last <= _TREND_ABS_TOL or decay <= _TREND_DECAY_MAX
    return ok, decay


@dataclass
class ClosenessTrace:
    """Closeness sups over a grid of window starts, with a trend verdict."""

    timescale: str
    T: float
    n_grid: np.ndarray
    sup: np.ndarray
    truncated: np.ndarray
    decay: float
    trend_ok: bool


def closeness_trace(sim: SimRun, timescale: str = "fast", T: float = 1.0,
                    n_grid: Sequence[int] | None = None) -> ClosenessTrace:
    """Closeness sup at each window start in the grid.

    The verdict passes when the last-quartile mean is at most
    _TREND_DECAY_MAX times the first-quartile mean, or is below the
    absolute floor _TREND_ABS_TOL (already vanished at this resolution).
    """
    grid = (default_n_grid(sim.num_flow_steps) if n_grid is None
            else np.asarray(list(n_grid), dtype=int))
    if grid.size == 0:
        raise ValueError("empty window-start grid")
    sups = np.empty(grid.size)
    trunc = np.zeros(grid.size, dtype=bool)
    for i, n in enumerate(grid):
        res = closeness_sup(sim, timescale, int(n), T)
        sups[i] = res.sup
        trunc[i] = res.truncated
    ok, decay = _trend_verdict(sups)
    return ClosenessTrace(timescale, T, grid, sups, trunc, decay, ok)


@dataclass
class GraphContainmentTrace:
    """Distances of applied increments to the flow and jump graphs.

    Trend verdicts follow the closeness rule; they are meaningful for
    runs whose applied drifts should settle onto the graphs
    (deterministic runs, averaged limits), while sampled drifts keep the
    flow trace at the sampling-noise scale.
    """

    flow: np.ndarray          # one entry per flow step
    jump: np.ndarray          # one entry per recorded jump
    flow_trend_ok: bool = True
    jump_trend_ok: bool = True

    @property
    def flow_max(self) -> float:
        return float(np.max(self.flow)) if self.flow.size else 0.0

    @property
    def jump_max(self) -> float:
        return float(np.max(self.jump)) if self.jump.size else 0.0


def graph_containment_trace(sim: SimRun, radius: float = 0.1,
                            probes: int = 64) -> GraphContainmentTrace:
    """Per-step distance of (state, applied drift) to the flow graph and
    of (state before, state after) to the jump graph.

    Deterministic runs of single-valued systems yield identically zero
    traces; stochastic runs show the per-step sampling noise.
    """
    stacked = sim.system.stacked()
    K = sim.num_flow_steps
    flow = np.empty(K)
    for k in range(K):
        v = np.concatenate([sim.fhat_slow[k], sim.fhat_fast[k]])
        flow[k] = restricted_graph_distance(stacked, sim.pre_flow[k], v,
                                            "flow", radius, probes)
    jump = np.array([
        restricted_graph_distance(stacked, rec.state_before, rec.state_after,
                                  "jump", radius, probes)
        for rec in sim.jump_log])
    flow_ok, _ = _trend_verdict(flow)
    jump_ok, _ = _trend_verdict(jump) if jump.size else (True, 0.0)
    return GraphContainmentTrace(flow, jump, flow_ok, jump_ok)


@dataclass
class RescaledDriftTrace:
    """Slow drift measured on the fast clock: (h_slow/h_fast) |f_slow|.

    When the timescales separate this dies out, which is what makes the
    frozen-slow system the right fast-block limit.
    """

    values: np.ndarray
    first_decile_max: float
    last_decile_max: float
    decay: float
    ok: bool


def boundary_layer_rescaled_drift(sim: SimRun) -> RescaledDriftTrace:
    norms = np.sqrt(np.add.reduce(np.square(sim.f_slow), axis=1))
    values = (sim.h_slow / sim.h_fast) * norms
    d = max(values.size // 10, 1)
    first = float(np.max(values[:d]))
    last = float(np.max(values[-d:]))
    if first > 0:
        decay = last / first
    else:
        decay = 0.0 if last == 0 else math.inf
    ok = last <= _BL_DECAY_MAX * first if first > 0 else last == 0
    return RescaledDriftTrace(values, first, last, decay, ok)


@dataclass
class TrackingErrorTrace:
    """Distance of the fast block from a tracking map's values per step."""

    values: np.ndarray
    tail_max: float
    tail_fraction: float
    tol: float
    ok: bool
    outside_domain: int       # steps where the map offered no value


def tracking_error_trace(sim: SimRun, tracking: TrackingMap,
                         tol: float = _TRACK_TOL) -> TrackingErrorTrace:
    """Gap between the fast block and the nearest tracked fast value,
    evaluated at every pre-step state; passes when the max over the
    trailing fraction of the run stays within tol.
    """
    ns, _ = sim.dims
    K = sim.num_flow_steps
    values = np.empty(K)
    outside = 0
    for k in range(K):
        xs = sim.pre_flow[k, :ns]
        xf = sim.pre_flow[k, ns:]
        cands = tracking.fast_values(xs)
        if not cands:
            values[k] = math.inf
            outside += 1
        else:
            values[k] = min(float(np.linalg.norm(xf - c)) for c in cands)
    tail = values[-max(1, int(_TRACK_TAIL_FRACTION * K)):]
    tail_max = float(np.max(tail))
    ok = tail_max <= tol
    return TrackingErrorTrace(values, tail_max, _TRACK_TAIL_FRACTION, tol, ok, outside)


def _trace_dict(tr: ClosenessTrace) -> dict:
    return {
        "T": tr.T,
        "n_grid": [int(n) for n in tr.n_grid],
        "sup": [float(s) for s in tr.sup],
        "truncated": [bool(t) for t in tr.truncated],
        "decay": float(tr.decay) if math.isfinite(tr.decay) else None,
        "trend_ok": bool(tr.trend_ok),
    }


def diagnostics_report(sim: SimRun, *, T: float = 1.0,
                       tracking: TrackingMap | None = None,
                       n_grid: Sequence[int] | None = None,
                       graph: bool = True, graph_verdict: bool = False,
                       radius: float = 0.1, probes: int = 64,
                       omega: bool = True) -> dict:
    """Assemble the JSON-ready diagnostics for one run.

    Graph trend verdicts only count toward the overall verdict when
    graph_verdict is set: sampled drifts keep the flow trace at noise
    scale by design, so that check is opt-in for runs expected to sit on
    the graphs.  Contains no timestamps or machine identifiers:
    rerunning the same run and serializing with write_report_json
    reproduces the bytes.
    """
    slow_tr = closeness_trace(sim, "slow", T, n_grid)
    fast_tr = closeness_trace(sim, "fast", T, n_grid)
    bl = boundary_layer_rescaled_drift(sim)
    report: dict = {
        "mode": sim.mode,
        "seed": sim.seed,
        "num_flow_steps": sim.num_flow_steps,
        "dims": list(sim.dims),
        "closeness_slow": _trace_dict(slow_tr),
        "closeness_fast": _trace_dict(fast_tr),
        "bl_drift": {
            "first_decile_max": bl.first_decile_max,
            "last_decile_max": bl.last_decile_max,
            "decay": bl.decay if math.isfinite(bl.decay) else None,
            "ok": bl.ok,
        },
        "domain_jump_indices": [int(k) for k in sim.sequence.domain.jump_indices],
    }
    verdicts = {
        "closeness_slow_trend": bool(slow_tr.trend_ok),
        "closeness_fast_trend": bool(fast_tr.trend_ok),
        "bl_drift_decay": bool(bl.ok),
    }
    if graph:
        g = graph_containment_trace(sim, radius, probes)
        report["graph_flow"] = {
            "max": g.flow_max,
            "mean": float(np.mean(g.flow)) if g.flow.size else 0.0,
            "trend_ok": bool(g.flow_trend_ok),
        }
        report["graph_jump"] = {
            "max": g.jump_max,
            "count": int(g.jump.size),
            "trend_ok": bool(g.jump_trend_ok),
        }
        if graph_verdict:
            verdicts["graph_flow_trend"] = bool(g.flow_trend_ok)
            verdicts["graph_jump_trend"] = bool(g.jump_trend_ok)
    else:
        report["graph_flow"] = None
        report["graph_jump"] = None
    if tracking is not None:
        tr = tracking_error_trace(sim, tracking)
        report["lambda_tracking"] = {
            "tail_max": tr.tail_max if math.isfinite(tr.tail_max) else None,
            "tail_fraction": tr.tail_fraction,
            "tol": tr.tol,
            "outside_domain": tr.outside_domain,
            "ok": tr.ok,
        }
        verdicts["lambda_tracking"] = bool(tr.ok)
    else:
        report["lambda_tracking"] = None
    if omega:
        cloud = omega_limit_estimate(sim.sequence)
        report["omega_cloud"] = [[float(c) for c in row] for row in cloud]
    else:
        report["omega_cloud"] = None
    verdicts["overall"] = all(verdicts.values())
    report["verdicts"] = verdicts
    return report


def write_report_json(report: dict, path: str) -> None:
    """Serialize a report with sorted keys and a trailing newline; the
    bytes are a pure function of the report content.
    """
    with open(path, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(path: str, x_name: str, y_name: str, xs, ys) -> None:
    """Two-column trace CSV with shortest round-trip float formatting."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{x_name},{y_name}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{int(x)},{repr(float(y))}\n")
