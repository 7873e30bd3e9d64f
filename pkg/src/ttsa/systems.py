"""Hybrid system descriptions and constructions derived from them.

A hybrid system couples a flow rule (applied while the state sits in the
flow set) with a jump rule (applied in the jump set).  The two-timescale
variant splits the state into a slow and a fast block with separate
drifts.  From a two-timescale system one can form:

  * its boundary-layer system: slow block frozen, fast drift kept;
  * its reduced system: fast block eliminated through a tracking map
    that assigns quasi-steady fast values to each slow state.

Membership predicates and drift evaluators are plain callables on numpy
vectors; distance functionals measure how far a candidate drift or jump
target is from the system's own, which is what the simulation
diagnostics consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Box",
    "HybridSystem",
    "TwoTimescaleSystem",
    "TrackingMap",
    "BasicConditionsReport",
    "restricted_graph_distance",
    "boundary_layer",
    "reduced_system",
    "restrict_to_box",
    "sampled_basic_conditions",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned compact box, the default notion of bounded region."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def inflate(self, margin: float) -> "Box":
        return Box(self.lo - margin, self.hi + margin)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, self.dim))

    @classmethod
    def bounding(cls, points: np.ndarray) -> "Box":
        pts = np.asarray(points, dtype=float)
        return cls(pts.min(axis=0), pts.max(axis=0))


def _norm(v: np.ndarray) -> float:
    # left-to-right accumulation keeps results reproducible against
    # definitional reimplementations of the same sum
    return math.sqrt(float(np.add.reduce(np.square(np.asarray(v, dtype=float)))))


@dataclass
class HybridSystem:
    """Flow/jump description of a hybrid system on R^dim.

    flow_dist(x, v) measures the distance from a candidate drift v to the
    flow map's value at x (regardless of set membership); jump_dist does
    the same for jump targets.  When omitted, single-valued maps are
    assumed and the distances default to plain norms of differences.
    """

    dim: int
    in_C: Callable[[np.ndarray], bool]
    in_D: Callable[[np.ndarray], bool]
    flow_eval: Callable[[np.ndarray], np.ndarray]
    jump_eval: Callable[[np.ndarray], np.ndarray]
    flow_dist: Callable[[np.ndarray, np.ndarray], float] | None = None
    jump_dist: Callable[[np.ndarray, np.ndarray], float] | None = None
    name: str = ""

    def __post_init__(self):
        if self.flow_dist is None:
            self.flow_dist = lambda x, v: _norm(np.asarray(v) - self.flow_eval(x))
        if self.jump_dist is None:
            self.jump_dist = lambda x, v: _norm(np.asarray(v) - self.jump_eval(x))


@dataclass
class TwoTimescaleSystem:
    """Hybrid system whose state splits into slow and fast blocks."""

    dims: tuple[int, int]
    in_C: Callable[[np.ndarray], bool]
    in_D: Callable[[np.ndarray], bool]
    flow_slow_eval: Callable[[np.ndarray], np.ndarray]
    flow_fast_eval: Callable[[np.ndarray], np.ndarray]
    jump_eval: Callable[[np.ndarray], np.ndarray]
    flow_slow_dist: Callable[[np.ndarray, np.ndarray], float] | None = None
    flow_fast_dist: Callable[[np.ndarray, np.ndarray], float] | None = None
    jump_dist: Callable[[np.ndarray, np.ndarray], float] | None = None
    name: str = ""

    def __post_init__(self):
        if self.flow_slow_dist is None:
            self.flow_slow_dist = lambda x, v: _norm(np.asarray(v) - self.flow_slow_eval(x))
        if self.flow_fast_dist is None:
            self.flow_fast_dist = lambda x, v: _norm(np.asarray(v) - self.flow_fast_eval(x))
        if self.jump_dist is None:
            self.jump_dist = lambda x, v: _norm(np.asarray(v) - self.jump_eval(x))

    @property
    def dim(self) -> int:
        return self.dims[0] + self.dims[1]

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ns = self.dims[0]
        return x[:ns], x[ns:]

    def stacked(self) -> HybridSystem:
        """Single-block view: drift (slow, fast) with unit weight on both."""
        ns = self.dims[0]

        def flow(x: np.ndarray) -> np.ndarray:
            return np.concatenate([self.flow_slow_eval(x), self.flow_fast_eval(x)])

        def flow_dist(x: np.ndarray, v: np.ndarray) -> float:
            ds = self.flow_slow_dist(x, np.asarray(v)[:ns])
            df = self.flow_fast_dist(x, np.asarray(v)[ns:])
            return math.sqrt(ds * ds + df * df)

        return HybridSystem(self.dim, self.in_C, self.in_D, flow, self.jump_eval,
                            flow_dist, self.jump_dist, name=self.name or "stacked")


@dataclass
class TrackingMap:
    """Assignment of fast values to slow states on a compact domain.

    Either a single-valued callable, or a finite point cloud of
    (slow, fast) samples grouped by slow coordinate.  Used to build
    reduced systems and to measure how closely a run's fast block
    follows its quasi-steady values.
    """

    kind: str                                  # "single_valued" | "point_cloud"
    domain_bound: Box                          # over slow coordinates
    eval: Callable[[np.ndarray], np.ndarray] | None = None
    points: np.ndarray | None = None           # rows (x_slow, x_fast)
    slow_dim: int | None = None                # required for point_cloud

    def __post_init__(self):
        if self.kind == "single_valued":
            if self.eval is None:
                raise ValueError("single_valued tracking map needs an eval callable")
        elif self.kind == "point_cloud":
            if self.points is None or self.slow_dim is None:
                raise ValueError("point_cloud tracking map needs points and slow_dim")
            pts = np.asarray(self.points, dtype=float)
            order = np.lexsort(pts.T[::-1])
            self.points = pts[order]
        else:
            raise ValueError(f"unknown tracking map kind: {self.kind!r}")

    @classmethod
    def single_valued(cls, eval: Callable[[np.ndarray], np.ndarray],
                      domain_bound: Box) -> "TrackingMap":
        return cls("single_valued", domain_bound, eval=eval)

    @classmethod
    def point_cloud(cls, points: np.ndarray, slow_dim: int,
                    domain_bound: Box | None = None) -> "TrackingMap":
        pts = np.asarray(points, dtype=float)
        if domain_bound is None:
            domain_bound = Box.bounding(pts[:, :slow_dim])
        return cls("point_cloud", domain_bound, points=pts, slow_dim=slow_dim)

    def covers(self, x_slow: np.ndarray, tol: float = 1e-9) -> bool:
        if self.kind == "single_valued":
            return self.domain_bound.contains(x_slow)
        return len(self.fast_values(x_slow, tol)) > 0

    def value(self, x_slow: np.ndarray) -> np.ndarray:
        """Single fast value at x_slow (the canonical one for clouds)."""
        if self.kind == "single_valued":
            if not self.domain_bound.contains(x_slow):
                raise ValueError("outside tracking map domain")
            return np.asarray(self.eval(x_slow), dtype=float)
        vals = self.fast_values(x_slow)
        if not vals:
            raise ValueError("outside tracking map domain")
        return vals[0]

    def fast_values(self, x_slow: np.ndarray, tol: float = 1e-9) -> list[np.ndarray]:
        """Fast values attached to slow states within tol of x_slow."""
        if self.kind == "single_valued":
            if not self.domain_bound.contains(x_slow):
                return []
            return [np.asarray(self.eval(x_slow), dtype=float)]
        ds = np.linalg.norm(self.points[:, :self.slow_dim] - x_slow, axis=1)
        rows = self.points[ds <= tol]
        return [row[self.slow_dim:] for row in rows]


def _sobol_offsets(dim: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy offsets in [-1, 1]^dim."""
    from scipy.stats import qmc

    n = 1
    while n < count:
        n *= 2
    eng = qmc.Sobol(d=dim, scramble=False)
    u = eng.random(n)[:count]
    return 2.0 * u - 1.0


def restricted_graph_distance(sys: HybridSystem, x: np.ndarray, v: np.ndarray,
                              which: str = "flow", radius: float = 0.1,
                              probes: int = 64) -> float:
    """Upper bound on the distance from the pair (x, v) to the graph of
    the flow (or jump) map restricted to its set.

    At a member point this is just the map distance at x.  Otherwise
    nearby member points x' are probed on a deterministic low-discrepancy
    pattern and the bound |x - x'| + map distance at x' is minimized;
    +inf when no member point is found within the search radius.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if which == "flow":
        member, dist = sys.in_C, sys.flow_dist
    elif which == "jump":
        member, dist = sys.in_D, sys.jump_dist
    else:
        raise ValueError("which must be 'flow' or 'jump'")
    if member(x):
        return float(dist(x, v))
    best = math.inf
    for off in _sobol_offsets(sys.dim, probes):
        xp = x + radius * off
        if member(xp):
            cand = _norm(xp - x) + float(dist(xp, v))
            if cand < best:
                best = cand
    return best


def boundary_layer(sys: TwoTimescaleSystem) -> TwoTimescaleSystem:
    """Freeze the slow block: drift (0, fast), same sets and jump rule.

    Idempotent: applying it twice gives the same drifts pointwise.
    """
    ns = sys.dims[0]
    zero = np.zeros(ns)
    if sys.name.endswith("frozen_slow"):
        name = sys.name
    else:
        name = (sys.name + "+frozen_slow") if sys.name else "frozen_slow"
    return replace(
        sys,
        flow_slow_eval=lambda x: zero.copy(),
        flow_slow_dist=lambda x, v: _norm(v),
        name=name,
    )


def _simplex_project(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort method)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(y) + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(y - theta, 0.0)


def _hull_distance(points: np.ndarray, v: np.ndarray, iters: int = 400) -> float:
    """Distance from v to the convex hull of finitely many points.

    Projected-gradient descent on the simplex weights; exact enough for
    diagnostic use (small point counts, tolerance ~1e-8).
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] == 1:
        return _norm(pts[0] - v)
    lam = np.full(pts.shape[0], 1.0 / pts.shape[0])
    lip = float(np.linalg.norm(pts @ pts.T, 2))
    step = 1.0 / max(lip, 1e-12)
    for _ in range(iters):
        resid = pts.T @ lam - v
        lam = _simplex_project(lam - step * (pts @ resid))
    return _norm(pts.T @ lam - v)


def reduced_system(sys: TwoTimescaleSystem, tracking: TrackingMap,
                   tol: float = 1e-9) -> HybridSystem:
    """Eliminate the fast block through a tracking map.

    The reduced state is the slow block alone.  Membership holds when
    some tracked fast value makes the full state a member; the flow at a
    slow state is the slow drift evaluated there, with the flow distance
    taken to the convex hull of the slow drifts over all tracked fast
    values (point clouds can carry several).  Jump targets are the slow
    projections of the full jump map.  Evaluation outside the tracking
    map's domain raises.
    """
    ns, _ = sys.dims

    def full_states(x_s: np.ndarray, member) -> list[np.ndarray]:
        vals = tracking.fast_values(np.asarray(x_s, dtype=float), tol)
        return [np.concatenate([x_s, xf]) for xf in vals
                if member is None or member(np.concatenate([x_s, xf]))]

    def in_C_r(x_s: np.ndarray) -> bool:
        return len(full_states(x_s, sys.in_C)) > 0

    def in_D_r(x_s: np.ndarray) -> bool:
        return len(full_states(x_s, sys.in_D)) > 0

    def require(cands: list[np.ndarray]) -> list[np.ndarray]:
        if not cands:
            raise ValueError("outside tracking map domain")
        return cands

    def flow_eval(x_s: np.ndarray) -> np.ndarray:
        cands = require(full_states(x_s, None))
        return sys.flow_slow_eval(cands[0])

    def flow_dist(x_s: np.ndarray, v: np.ndarray) -> float:
        cands = require(full_states(x_s, None))
        drifts = np.array([sys.flow_slow_eval(x) for x in cands])
        return _hull_distance(drifts, np.asarray(v, dtype=float))

    def jump_eval(x_s: np.ndarray) -> np.ndarray:
        cands = require(full_states(x_s, None))
        return sys.jump_eval(cands[0])[:ns]

    def jump_dist(x_s: np.ndarray, v: np.ndarray) -> float:
        cands = require(full_states(x_s, None))
        v = np.asarray(v, dtype=float)
        return min(_norm(sys.jump_eval(x)[:ns] - v) for x in cands)

    return HybridSystem(ns, in_C_r, in_D_r, flow_eval, jump_eval,
                        flow_dist, jump_dist,
                        name=(sys.name + "+reduced") if sys.name else "reduced")


def restrict_to_box(sys, box: Box):
    """Intersect the flow set with a box; keep only jumps that start and
    land inside it (single-valued target as the selection).  Drift and
    jump evaluators are unchanged.
    """
    in_C = sys.in_C
    in_D = sys.in_D
    jump = sys.jump_eval

    def in_C_k(x: np.ndarray) -> bool:
        return box.contains(x) and in_C(x)

    def in_D_k(x: np.ndarray) -> bool:
        return box.contains(x) and in_D(x) and box.contains(jump(x))

    return replace(sys, in_C=in_C_k, in_D=in_D_k,
                   name=(sys.name + "+boxed") if sys.name else "boxed")


@dataclass
class BasicConditionsReport:
    """Sampled sanity report on a system's sets and maps.

    Heuristic by construction: a clean report is evidence, not proof,
    that the sets behave like closed sets and the maps stay bounded on
    the sampled box.
    """

    n_samples: int
    in_flow_set: int
    in_jump_set: int
    in_neither: int
    eval_failures: list = field(default_factory=list)
    nonfinite_count: int = 0
    max_flow_norm: float = 0.0
    max_jump_norm: float = 0.0
    suspect_boundary_points: list = field(default_factory=list)
    heuristic: bool = True

    @property
    def clean(self) -> bool:
        return (not self.eval_failures and self.nonfinite_count == 0
                and not self.suspect_boundary_points
                and math.isfinite(self.max_flow_norm)
                and math.isfinite(self.max_jump_norm))


def _closure_probe(member, a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """Bisect a member/non-member pair; flag when the decimal-round
    endpoint of the final bracket is excluded from the set.

    The shorter-repr endpoint is treated as the intended boundary value;
    sets that exclude it look open along this segment.
    """
    lo, hi = a.copy(), b.copy()
    # enough halvings to collapse any double-precision bracket, even one
    # converging through the denormal range near zero
    for _ in range(2200):
        mid = 0.5 * (lo + hi)
        if np.array_equal(mid, lo) or np.array_equal(mid, hi):
            break
        if member(mid):
            lo = mid
        else:
            hi = mid
    lo_len = sum(len(repr(float(c))) for c in lo)
    hi_len = sum(len(repr(float(c))) for c in hi)
    if hi_len < lo_len and not member(hi):
        return hi
    return None


def sampled_basic_conditions(sys: HybridSystem, box: Box, n_samples: int = 256,
                             seed: int = 0) -> BasicConditionsReport:
    """Probe membership, evaluability, and boundedness on a box.

    Samples uniformly, evaluates the flow map on flow-set members and the
    jump map on jump-set members, and runs a closure probe along sampled
    segments that cross the flow-set boundary.  All checks are finite
    surrogates; the report is flagged heuristic.
    """
    rng = np.random.default_rng(seed)
    pts = box.sample(rng, n_samples)
    report = BasicConditionsReport(n_samples, 0, 0, 0)
    members_C: list[np.ndarray] = []
    outside_C: list[np.ndarray] = []
    for x in pts:
        try:
            c, d = sys.in_C(x), sys.in_D(x)
        except Exception as exc:  # membership must never raise on the box
            report.eval_failures.append(("membership", x, repr(exc)))
            continue
        (members_C if c else outside_C).append(x)
        report.in_flow_set += int(c)
        report.in_jump_set += int(d)
        report.in_neither += int(not (c or d))
        if c:
            try:
                f = np.asarray(sys.flow_eval(x), dtype=float)
                if not np.all(np.isfinite(f)):
                    report.nonfinite_count += 1
                report.max_flow_norm = max(report.max_flow_norm, _norm(f))
            except Exception as exc:
                report.eval_failures.append(("flow", x, repr(exc)))
        if d:
            try:
                g = np.asarray(sys.jump_eval(x), dtype=float)
                if not np.all(np.isfinite(g)):
                    report.nonfinite_count += 1
                report.max_jump_norm = max(report.max_jump_norm, _norm(g))
            except Exception as exc:
                report.eval_failures.append(("jump", x, repr(exc)))
    for a, b in zip(members_C[:16], outside_C[:16]):
        flagged = _closure_probe(sys.in_C, a, b)
        if flagged is not None:
            report.suspect_boundary_points.append(flagged)
    return report
