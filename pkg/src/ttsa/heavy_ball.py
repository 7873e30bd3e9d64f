"""Momentum descent with uphill resets, driven by sampled gradients.

The state carries position q, momentum p, a dwell timer, and a gradient
tracker xi.  While flowing, q follows p, p is damped and pulled by xi,
and the timer ramps up; once the timer passes the dwell threshold and
the tracked gradient no longer opposes the momentum, a jump resets the
momentum and the timer.  The tracker is the fast block of a
two-timescale pair: its drift pulls xi toward the full finite-sum
gradient, but only one randomly chosen component gradient is observed
per step.

The rest set (minimizers, zero momentum, timer within its band) is the
target of convergence; helpers here measure distance to it, bound the
per-step gradient noise, and expose the quasi-steady tracking map
xi = full gradient, from which the reduced system eliminates xi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._rng import StepRng
from .simulate import DriftOracle
from .systems import Box, HybridSystem, TrackingMap, TwoTimescaleSystem, reduced_system

__all__ = [
    "FiniteSumObjective",
    "HeavyBallParams",
    "quadratic_sum",
    "nonconvex_demo",
    "momentum_flow",
    "momentum_reset",
    "membership",
    "two_timescale_heavy_ball",
    "fast_tracker_oracle",
    "tracking_map",
    "reduced_heavy_ball",
    "component_deviation_bound",
    "analytic_quadratic_bound",
    "deviation_bound_envelope",
    "distance_to_rest_set",
    "default_initial_state",
]


@dataclass
class FiniteSumObjective:
    """Average of finitely many smooth components, queried one at a time.

    full_grad defaults to the empirical mean of the component gradients;
    an override must reproduce that mean exactly (same floating-point
    reduction), which is what keeps the noise-bound certificates exact.
    Either a finite minimizer list or a minimizer ring radius makes
    distance-to-minimizer queries available.
    """

    dim: int
    num_components: int
    component_value: Callable[[int, np.ndarray], float]
    component_grad: Callable[[int, np.ndarray], np.ndarray]
    full_grad_override: Callable[[np.ndarray], np.ndarray] | None = None
    minimizers: np.ndarray | None = None
    minimizer_radius: float | None = None
    anchors: np.ndarray | None = None    # quadratic family only
    name: str = ""

    def value(self, q: np.ndarray) -> float:
        return float(np.mean([self.component_value(i, q)
                              for i in range(self.num_components)]))

    def full_grad(self, q: np.ndarray) -> np.ndarray:
        if self.full_grad_override is not None:
            return self.full_grad_override(q)
        grads = np.stack([self.component_grad(i, q)
                          for i in range(self.num_components)])
        return np.mean(grads, axis=0)

    def minimizer_distance(self, q: np.ndarray) -> float:
        if self.minimizers is not None:
            return float(np.min(np.linalg.norm(self.minimizers - q, axis=1)))
        if self.minimizer_radius is not None:
            return abs(float(np.linalg.norm(q)) - self.minimizer_radius)
        raise ValueError("minimizer set unavailable for this objective")


def quadratic_sum(dim: int = 2, num_components: int = 10, seed: int = 0,
                  spread: float = 0.01,
                  anchors: np.ndarray | None = None) -> FiniteSumObjective:
    """Components 0.5 |q - a_i|^2 with anchors a_i = spread * standard
    normal draws (or given explicitly); the average is minimized exactly
    at the anchor mean.

    The default spread keeps the component gradients within about a
    percent of each other, so sampled-gradient noise is small in
    absolute terms while still exercising every stochastic code path.
    full_grad averages the broadcast rows q - a_i the same way the
    generic component mean does, so the exact-average contract holds
    bit for bit.
    """
    if anchors is None:
        rng = np.random.default_rng(seed)
        anchors = spread * rng.standard_normal((num_components, dim))
    else:
        anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        num_components, dim = anchors.shape
    center = np.mean(anchors, axis=0)

    def comp_value(i: int, q: np.ndarray) -> float:
        d = q - anchors[i]
        return 0.5 * float(np.dot(d, d))

    def comp_grad(i: int, q: np.ndarray) -> np.ndarray:
        return q - anchors[i]

    def full_grad(q: np.ndarray) -> np.ndarray:
        # add.reduce-then-divide is what np.mean does inside, minus the
        # dispatch overhead; this sits on the simulation's hottest path
        return np.add.reduce(q - anchors, axis=0) / num_components

    return FiniteSumObjective(dim, num_components, comp_value, comp_grad,
                              full_grad_override=full_grad,
                              minimizers=center[None, :], anchors=anchors,
                              name=f"quadratic_sum(dim={dim}, N={num_components})")


def nonconvex_demo(dim: int, num_components: int, seed: int = 0,
                   bump_height: float = 1.0, bump_width_sq: float = 0.25,
                   noise_scale: float = 0.1) -> FiniteSumObjective:
    """A bowl with a central bump (minimizers on a ring) plus centered
    per-component sinusoidal perturbations.
    """
    rng = np.random.default_rng(seed)
    c = noise_scale * rng.standard_normal(num_components)
    c -= c.mean()
    alpha, sigma2 = float(bump_height), float(bump_width_sq)

    def base_value(q: np.ndarray) -> float:
        qq = float(np.dot(q, q))
        return 0.5 * qq + alpha * math.exp(-qq / (2.0 * sigma2))

    def base_grad(q: np.ndarray) -> np.ndarray:
        qq = float(np.dot(q, q))
        return q * (1.0 - (alpha / sigma2) * math.exp(-qq / (2.0 * sigma2)))

    def comp_value(i: int, q: np.ndarray) -> float:
        return base_value(q) + float(c[i]) * float(np.sum(np.sin(q)))

    def comp_grad(i: int, q: np.ndarray) -> np.ndarray:
        return base_grad(q) + c[i] * np.cos(q)

    if alpha > sigma2:
        radius = math.sqrt(2.0 * sigma2 * math.log(alpha / sigma2))
        mins, ring = None, radius
    else:
        mins, ring = np.zeros((1, dim)), None
    return FiniteSumObjective(dim, num_components, comp_value, comp_grad,
                              minimizers=mins, minimizer_radius=ring,
                              name=f"nonconvex_demo(dim={dim}, N={num_components})")


@dataclass(frozen=True)
class HeavyBallParams:
    """Damping and dwell time of the momentum iteration."""

    kappa: float = 1.0
    dwell: float = 0.5

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("damping kappa must be positive")
        if self.dwell <= 0:
            raise ValueError("dwell time must be positive")


def _split(x: np.ndarray, n: int):
    return x[:n], x[n:2 * n], float(x[2 * n]), x[2 * n + 1:]


def momentum_flow(chi: np.ndarray, grad: np.ndarray,
                  params: HeavyBallParams = HeavyBallParams()) -> np.ndarray:
    """Drift of the (q, p, timer) block under a given gradient signal:
    position follows momentum, momentum is damped and pulled downhill,
    the timer ramps at unit rate and saturates at twice the dwell time.
    """
    n = (chi.shape[0] - 1) // 2
    p, tau = chi[n:2 * n], float(chi[2 * n])
    out = np.empty(2 * n + 1)
    out[:n] = p
    out[n:2 * n] = -params.kappa * p - grad
    out[2 * n] = min(1.0, 2.0 - tau / params.dwell)
    return out


def momentum_reset(chi: np.ndarray) -> np.ndarray:
    """Jump rule on the (q, p, timer) block: keep q, zero p and timer."""
    n = (chi.shape[0] - 1) // 2
    out = chi.copy()
    out[n:] = 0.0
    return out


def membership(x: np.ndarray,
               params: HeavyBallParams = HeavyBallParams()) -> tuple[bool, bool]:
    """(flow-set, jump-set) membership of a full state (q, p, timer, xi).

    Flow: timer not past the dwell time, or tracked gradient opposing
    momentum.  Jump: timer past the dwell time and tracked gradient
    aligned with momentum.  The union covers every state.
    """
    n = (x.shape[0] - 1) // 3
    _, p, tau, xi = _split(x, n)
    aligned = float(np.dot(xi, p))
    in_C = tau <= params.dwell or aligned <= 0.0
    in_D = tau >= params.dwell and aligned >= 0.0
    return in_C, in_D


def two_timescale_heavy_ball(objective: FiniteSumObjective,
                             params: HeavyBallParams = HeavyBallParams()
                             ) -> TwoTimescaleSystem:
    """Slow block (q, p, timer), fast block xi, on R^(3 dim + 1).

    The slow drift is momentum_flow driven by xi in place of the true
    gradient; the fast drift pulls xi toward the full gradient at q; the
    jump applies momentum_reset and keeps xi.
    """
    n = objective.dim
    T = params.dwell
    ns = 2 * n + 1

    def in_C(x: np.ndarray) -> bool:
        tau = x[2 * n]
        return tau <= T or float(np.dot(x[ns:], x[n:2 * n])) <= 0.0

    def in_D(x: np.ndarray) -> bool:
        tau = x[2 * n]
        return tau >= T and float(np.dot(x[ns:], x[n:2 * n])) >= 0.0

    def flow_slow(x: np.ndarray) -> np.ndarray:
        return momentum_flow(x[:ns], x[ns:], params)

    def flow_fast(x: np.ndarray) -> np.ndarray:
        return objective.full_grad(x[:n]) - x[ns:]

    def jump(x: np.ndarray) -> np.ndarray:
        out = x.copy()
        out[n:ns] = 0.0
        return out

    return TwoTimescaleSystem(dims=(ns, n), in_C=in_C, in_D=in_D,
                              flow_slow_eval=flow_slow, flow_fast_eval=flow_fast,
                              jump_eval=jump,
                              name=f"heavy_ball[{objective.name}]")


def fast_tracker_oracle(objective: FiniteSumObjective,
                        bias: np.ndarray | float | None = None) -> DriftOracle:
    """Oracle for the tracker drift: mean full_grad(q) - xi, samples with
    one uniformly drawn component gradient in place of the full one.

    Samples are nudged by at most one ulp per coordinate so that the
    recorded residual (sample minus mean) never exceeds the component
    deviation coordinatewise; the per-step noise then provably respects
    component_deviation_bound even in floating point.  An optional bias
    is added verbatim to samples only, leaving the mean untouched, to
    produce deliberately inconsistent fixtures.
    """
    n = objective.dim
    N = objective.num_components
    fg = objective.full_grad
    cg = objective.component_grad
    tracker_from = 2 * n + 1
    bias_vec = None
    if bias is not None:
        bias_vec = np.broadcast_to(np.asarray(bias, dtype=float), (n,)).copy()

    def mean(x: np.ndarray) -> np.ndarray:
        return fg(x[:n]) - x[tracker_from:]

    def sample(x: np.ndarray, rng: StepRng) -> np.ndarray:
        q = x[:n]
        xi = x[tracker_from:]
        y = rng.integers(N)
        g = fg(q)
        mu = g - xi
        dev = cg(y, q) - g
        s = mu + dev
        for _ in range(60):
            r = s - mu
            mask = np.abs(r) > np.abs(dev)
            if not mask.any():
                break
            s[mask] = np.nextafter(s[mask], mu[mask])
        if bias_vec is not None:
            s = s + bias_vec
        return s

    return DriftOracle(mean, sample)


def tracking_map(objective: FiniteSumObjective, bound: Box) -> TrackingMap:
    """Quasi-steady tracker values: xi = full gradient at q, defined for
    slow states (q, p, timer) inside the bound.
    """
    n = objective.dim
    if bound.dim != 2 * n + 1:
        raise ValueError("bound must cover the slow block (q, p, timer)")
    return TrackingMap.single_valued(lambda xs: objective.full_grad(xs[:n]), bound)


def reduced_heavy_ball(objective: FiniteSumObjective,
                       params: HeavyBallParams = HeavyBallParams(),
                       bound: Box | None = None) -> HybridSystem:
    """Momentum iteration with the tracker eliminated: xi is pinned to
    the full gradient inside the bound (a generous default box).
    """
    n = objective.dim
    if bound is None:
        half = np.full(2 * n + 1, 1e6)
        bound = Box(-half, half)
    sys = two_timescale_heavy_ball(objective, params)
    return reduced_system(sys, tracking_map(objective, bound))


def component_deviation_bound(objective: FiniteSumObjective, p: float,
                              q: np.ndarray) -> float:
    """Largest |component gradient - full gradient|^(2p) over components.

    Squared norms accumulate coordinatewise left to right, matching how
    run residual norms are taken, so the bound is exact (not merely
    approximate) against recorded per-step noise.
    """
    mu = objective.full_grad(q)
    devs = np.stack([objective.component_grad(i, q) - mu
                     for i in range(objective.num_components)])
    norm_sq = np.add.reduce(np.square(devs), axis=1)
    return float(np.max(norm_sq ** p))


def deviation_bound_envelope(objective: FiniteSumObjective, p: float,
                             radius: float, center: np.ndarray | None = None,
                             probe_count: int = 64, grid_step: float = 0.05) -> float:
    """Largest component deviation bound over a sampled ball.

    Probes sit on a fixed absolute radial grid (multiples of grid_step
    up to the radius) times a deterministic direction set, so the probe
    set for a larger radius contains the one for a smaller radius and
    the envelope is monotone in the radius.
    """
    from .systems import _sobol_offsets

    if radius < 0:
        raise ValueError("radius must be nonnegative")
    n = objective.dim
    if center is None:
        center = np.zeros(n)
    dirs = _sobol_offsets(n, probe_count)
    norms = np.linalg.norm(dirs, axis=1)
    dirs = dirs[norms > 1e-12] / norms[norms > 1e-12, None]
    best = component_deviation_bound(objective, p, center)
    # Integer multiples keep the grid for a larger radius a superset of
    # the grid for a smaller one; accumulated addition would not.
    for i in range(1, int(math.floor(radius / grid_step)) + 1):
        r = i * grid_step
        if r > radius:
            break
        for d in dirs:
            best = max(best, component_deviation_bound(objective, p, center + r * d))
    return best


def analytic_quadratic_bound(objective: FiniteSumObjective, p: float) -> float:
    """Closed-form moment bound for quadratic-sum objectives.

    Component gradients are q - a_i, so the deviation from the full
    gradient is the constant mean(a) - a_i and the bound is
    max_i |mean(a) - a_i|^(2p), independent of q.
    """
    if objective.anchors is None:
        raise ValueError("analytic bound needs an objective with anchors")
    devs = np.mean(objective.anchors, axis=0) - objective.anchors
    norm_sq = np.add.reduce(np.square(devs), axis=1)
    return float(np.max(norm_sq ** p))


def distance_to_rest_set(x: np.ndarray, objective: FiniteSumObjective,
                         params: HeavyBallParams = HeavyBallParams()) -> float:
    """Distance of a (full or slow) state to minimizers x {0 momentum} x
    {timer within its band [0, 2 dwell]}.
    """
    n = objective.dim
    x = np.asarray(x, dtype=float)
    if x.shape[0] not in (2 * n + 1, 3 * n + 1):
        raise ValueError(f"state length {x.shape[0]} matches neither the slow "
                         f"block ({2 * n + 1}) nor the full state ({3 * n + 1})")
    q, p, tau = x[:n], x[n:2 * n], float(x[2 * n])
    dq = objective.minimizer_distance(q)
    dp = float(np.linalg.norm(p))
    dtau = max(0.0, tau - 2.0 * params.dwell, -tau)
    return math.sqrt(dq * dq + dp * dp + dtau * dtau)


def default_initial_state(objective: FiniteSumObjective) -> np.ndarray:
    """Unit position, zero momentum, zero timer, zero tracker."""
    n = objective.dim
    x0 = np.zeros(3 * n + 1)
    x0[:n] = 1.0
    return x0
