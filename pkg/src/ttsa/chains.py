"""Chains of solution segments and invariance spot checks.

A chain from a to b is a finite sequence of waypoints joined by
simulated solution segments: each leg starts exactly at its waypoint,
lasts at least a prescribed hybrid duration (flow time plus jumps), and
ends within a prescribed slack of the next waypoint.  Chains witness
reachability through the slack, which is what makes the recurrence
structure of a system visible at finite resolution.

The search is greedy best-first on the endpoint gap to the target; the
only moves are simulating legs of a few durations from the best known
waypoint.  Solution legs follow the flow selection, so a failed search
never proves that no chain exists; failures report the best gap seen.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .systems import Box, HybridSystem

__all__ = [
    "ChainLeg",
    "Chain",
    "ChainValidation",
    "ChainSearchError",
    "InvarianceReport",
    "simulate_solution_leg",
    "find_chain",
    "validate_chain",
    "chain_to_json",
    "weak_invariance_spot_check",
]


class ChainSearchError(RuntimeError):
    """No chain found within the leg budget; carries the best gap seen."""

    def __init__(self, message: str, best_gap: float, legs_used: int):
        super().__init__(message)
        self.best_gap = best_gap
        self.legs_used = legs_used


@dataclass
class ChainLeg:
    """One simulated solution segment (Euler polyline with jump priority)."""

    states: np.ndarray        # (m, dim) arrivals
    times: np.ndarray         # flow time at each arrival
    levels: np.ndarray        # jump counter at each arrival
    escaped: bool = False     # left both sets before the requested duration
    stopped: bool = False     # halted by a caller-provided stop predicate

    @property
    def hybrid_duration(self) -> float:
        """Flow time plus jumps accumulated by the leg."""
        return float(self.times[-1]) + float(self.levels[-1] - self.levels[0])

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]


def simulate_solution_leg(system: HybridSystem, x0: np.ndarray, horizon: float,
                          dt: float, *, stop_fn=None,
                          max_consecutive_jumps: int = 10**4,
                          blowup_norm: float = 1e12) -> ChainLeg:
    """Integrate one solution segment until its hybrid length (flow time
    plus jump count) reaches the horizon.

    Jumps fire with priority, each contributing one unit of hybrid
    length; flow advances by dt, clipped so the horizon is hit exactly.
    The leg ends early when the state leaves both sets (escaped) or when
    stop_fn returns true at an arrival (stopped).
    """
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    x = np.array(x0, dtype=float)
    t, j = 0.0, 0
    states = [x.copy()]
    times = [0.0]
    levels = [0]
    escaped = stopped = False

    def arrive(x: np.ndarray) -> bool:
        if not np.all(np.isfinite(x)) or float(np.max(np.abs(x))) > blowup_norm:
            raise RuntimeError(f"numerical blowup at leg time t={t:.6g}")
        states.append(x.copy())
        times.append(t)
        levels.append(j)
        return stop_fn is not None and bool(stop_fn(x))

    while t + j < horizon - 1e-12 and not (escaped or stopped):
        consecutive = 0
        while system.in_D(x) and t + j < horizon - 1e-12:
            x = np.asarray(system.jump_eval(x), dtype=float)
            j += 1
            consecutive += 1
            if arrive(x):
                stopped = True
                break
            if consecutive > max_consecutive_jumps:
                raise RuntimeError(
                    f"jump livelock: more than {max_consecutive_jumps} "
                    f"consecutive jumps at leg time t={t:.6g}")
        if escaped or stopped or t + j >= horizon - 1e-12:
            break
        if not system.in_C(x):
            escaped = True
            break
        step = min(dt, horizon - (t + j))
        x = x + step * np.asarray(system.flow_eval(x), dtype=float)
        t += step
        if arrive(x):
            stopped = True
    return ChainLeg(np.array(states), np.array(times), np.array(levels),
                    escaped, stopped)


@dataclass
class Chain:
    """Waypoints and the solution legs that join them.

    points has one more entry than legs; leg i starts exactly at
    points[i], lasts at least tau in hybrid time, and ends within eps of
    points[i+1].  With internal_box set, every sampled leg point lies in
    the box.
    """

    points: list[np.ndarray]
    legs: list[ChainLeg]
    tau: float
    eps: float
    internal_box: Box | None = None

    @property
    def num_legs(self) -> int:
        return len(self.legs)

    @property
    def gaps(self) -> list[float]:
        """Distance from each leg end to its following waypoint."""
        return [float(np.linalg.norm(leg.end - pt))
                for leg, pt in zip(self.legs, self.points[1:])]


@dataclass
class ChainValidation:
    ok: bool
    problems: list[str] = field(default_factory=list)


def validate_chain(chain: Chain, slack: float = 1e-9) -> ChainValidation:
    """Independent check of the waypoint/leg contract."""
    problems = []
    if len(chain.points) != len(chain.legs) + 1:
        problems.append("waypoint count must exceed leg count by one")
        return ChainValidation(False, problems)
    for i, leg in enumerate(chain.legs):
        if not np.array_equal(leg.start, np.asarray(chain.points[i], dtype=float)):
            problems.append(f"leg {i} does not start exactly at waypoint {i}")
        if float(np.linalg.norm(leg.end - chain.points[i + 1])) > chain.eps + slack:
            problems.append(f"leg {i} ends too far from waypoint {i + 1}")
        if leg.hybrid_duration < chain.tau - slack:
            problems.append(f"leg {i} shorter than the required duration")
        if chain.internal_box is not None and not _all_inside(chain.internal_box,
                                                              leg.states):
            problems.append(f"leg {i} leaves the internal box")
    return ChainValidation(not problems, problems)


def chain_to_json(chain: Chain) -> dict:
    """JSON-ready summary: waypoints, per-leg horizons, gaps, parameters."""
    return {
        "tau": chain.tau,
        "eps": chain.eps,
        "num_legs": chain.num_legs,
        "waypoints": [[float(c) for c in p] for p in chain.points],
        "legs": [{
            "flow_time": float(leg.times[-1]),
            "jumps": int(leg.levels[-1] - leg.levels[0]),
            "num_points": int(leg.states.shape[0]),
        } for leg in chain.legs],
        "gaps": chain.gaps,
        "internal_box": None if chain.internal_box is None else {
            "lo": [float(c) for c in chain.internal_box.lo],
            "hi": [float(c) for c in chain.internal_box.hi],
        },
    }


def _all_inside(box: Box, pts: np.ndarray) -> bool:
    return bool(np.all(pts >= box.lo) and np.all(pts <= box.hi))


def _nudge_toward(x: np.ndarray, target: np.ndarray, eps: float) -> np.ndarray:
    gap = target - x
    g = float(np.linalg.norm(gap))
    if g == 0.0:
        return x.copy()
    step = min(0.999 * eps, g)
    return x + (step / g) * gap


def find_chain(system: HybridSystem, start: np.ndarray, target: np.ndarray,
               tau: float, eps: float, budget: int, *,
               dt: float | None = None,
               horizon_ladder: tuple[float, ...] = (1.0, 2.0, 4.0),
               internal_box: Box | None = None) -> Chain:
    """Search for a chain from start to target.

    Greedy best-first on the waypoint gap to the target; every expansion
    simulates one leg per ladder entry (hybrid duration = entry * tau)
    from the waypoint.  Each accepted leg end spawns follow-up waypoints
    (the end itself and its nudge toward the target within the slack),
    kept only when they sit in the flow or jump set.  The budget bounds
    the number of simulated legs; with internal_box given, legs with any
    sampled point outside the box are discarded.  Raises
    ChainSearchError with the best gap when the budget runs out.
    """
    start = np.asarray(start, dtype=float)
    target = np.asarray(target, dtype=float)
    if tau <= 0 or eps <= 0:
        raise ValueError("tau and eps must be positive")
    if budget < 1:
        raise ValueError("budget must be at least one leg")
    for name, pt in (("start", start), ("target", target)):
        if not (system.in_C(pt) or system.in_D(pt)):
            raise ValueError(f"{name} point lies outside the flow and jump sets")
        if internal_box is not None and not internal_box.contains(pt):
            raise ValueError(f"{name} point lies outside the internal box")
    if dt is None:
        dt = min(1e-2, tau / 100.0)

    counter = 0
    heap: list = []
    heapq.heappush(heap, (float(np.linalg.norm(start - target)), counter,
                          start, [start], []))
    best_gap = math.inf
    legs_used = 0
    while heap and legs_used < budget:
        _, _, w, pts, legs = heapq.heappop(heap)
        for hz in horizon_ladder:
            if legs_used >= budget:
                break
            leg = simulate_solution_leg(system, w, hz * tau, dt)
            legs_used += 1
            if leg.hybrid_duration < tau - 1e-12:
                continue
            if internal_box is not None and not _all_inside(internal_box, leg.states):
                continue
            end = leg.end
            g = float(np.linalg.norm(end - target))
            best_gap = min(best_gap, g)
            if g <= eps:
                return Chain(pts + [target], legs + [leg], tau, eps, internal_box)
            for cand in (_nudge_toward(end, target, eps), end):
                if not (system.in_C(cand) or system.in_D(cand)):
                    continue
                if internal_box is not None and not internal_box.contains(cand):
                    continue
                counter += 1
                heapq.heappush(heap, (float(np.linalg.norm(cand - target)), counter,
                                      cand, pts + [cand.copy()], legs + [leg]))
                break
    raise ChainSearchError(
        f"no chain within {budget} legs; best endpoint gap {best_gap:.6g}",
        best_gap, legs_used)


@dataclass
class InvarianceReport:
    """Spot-check result: which probe points some qualifying arc visits.

    A qualifying arc starts at a cloud point, keeps its hybrid length at
    least the required duration, and never strays beyond eps from the
    cloud.  Falsification-oriented: all_ok is evidence of (approximate,
    weak) invariance, not a certificate.
    """

    ok: np.ndarray            # per cloud point: visited by a qualifying arc
    stay_durations: np.ndarray  # per cloud point: how long its own arc stayed
    num_arcs: int
    min_duration: float
    eps: float

    @property
    def all_ok(self) -> bool:
        return bool(np.all(self.ok))

    @property
    def fraction_ok(self) -> float:
        return float(np.mean(self.ok))


def weak_invariance_spot_check(system: HybridSystem, points: np.ndarray, *,
                               eps: float, min_duration: float,
                               dt: float = 1e-2) -> InvarianceReport:
    """From each cloud point, integrate one leg truncated at the first
    exit from the eps-inflation of the cloud; arcs that keep hybrid
    length >= min_duration qualify.  A cloud point passes when some
    qualifying arc comes within eps of it.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty point cloud")
    if eps <= 0 or min_duration <= 0:
        raise ValueError("eps and min_duration must be positive")
    tree = cKDTree(pts)
    stay = np.zeros(pts.shape[0])
    arc_points: list[np.ndarray] = []
    num_arcs = 0
    for i, p in enumerate(pts):
        stop = lambda x: float(tree.query(x)[0]) > eps
        leg = simulate_solution_leg(system, p, min_duration, dt, stop_fn=stop)
        end = len(leg.times) - (1 if leg.stopped else 0)
        if end < 1:
            continue
        stay[i] = float(leg.times[end - 1]) + float(leg.levels[end - 1])
        if stay[i] >= min_duration - 1e-6:
            arc_points.append(leg.states[:end])
            num_arcs += 1
    if arc_points:
        arc_tree = cKDTree(np.concatenate(arc_points))
        dists, _ = arc_tree.query(pts)
        ok = dists <= eps
    else:
        ok = np.zeros(pts.shape[0], dtype=bool)
    return InvarianceReport(ok, stay, num_arcs, min_duration, eps)
