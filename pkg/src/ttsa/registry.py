"""Named, ready-to-run study instances.

An instance bundles a two-timescale system with everything a driver
needs to simulate and judge it: initial state, drift oracles, tracking
map, and scalar metrics evaluated on full states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .heavy_ball import (
    FiniteSumObjective,
    HeavyBallParams,
    default_initial_state,
    distance_to_rest_set,
    fast_tracker_oracle,
    quadratic_sum,
    tracking_map,
    two_timescale_heavy_ball,
)
from .simulate import DriftOracle
from .systems import Box, TrackingMap, TwoTimescaleSystem

__all__ = [
    "Instance",
    "INSTANCE_NAMES",
    "build_instance",
    "heavy_ball_instance",
    "linear_decay_instance",
]

_TRACKING_BOX_HALF_WIDTH = 1e6


@dataclass
class Instance:
    """A system plus the pieces needed to run and evaluate it."""

    name: str
    system: TwoTimescaleSystem
    x0: np.ndarray
    slow_oracle: DriftOracle | None = None
    fast_oracle: DriftOracle | None = None
    tracking: TrackingMap | None = None
    objective: FiniteSumObjective | None = None
    params: HeavyBallParams | None = None
    default_mode: str = "stochastic"
    metrics: Mapping[str, Callable[[np.ndarray], float]] = field(default_factory=dict)


def _tracking_box(objective: FiniteSumObjective) -> Box:
    n = objective.dim
    half = _TRACKING_BOX_HALF_WIDTH
    return Box(lo=np.full(2 * n + 1, -half), hi=np.full(2 * n + 1, half))


def heavy_ball_instance(objective: FiniteSumObjective | None = None,
                        params: HeavyBallParams | None = None, *,
                        mode: str = "stochastic",
                        bias: np.ndarray | float | None = None,
                        name: str = "hhb_tt") -> Instance:
    """Momentum descent with a tracked gradient estimate.

    In stochastic mode the fast drift is sampled one component gradient
    at a time; in deterministic mode the full gradient is applied
    directly.  An optional constant bias shifts only the samples, which
    breaks the zero-mean property on purpose (fixture for diagnostics
    that must fail).
    """
    if objective is None:
        objective = quadratic_sum()
    if params is None:
        params = HeavyBallParams()
    system = two_timescale_heavy_ball(objective, params)
    fast_oracle = fast_tracker_oracle(objective, bias=bias)
    n = objective.dim
    ns = 2 * n + 1

    def dist_to_rest(x: np.ndarray) -> float:
        return distance_to_rest_set(x, objective, params)

    def tracking_gap(x: np.ndarray) -> float:
        return float(np.linalg.norm(x[ns:] - objective.full_grad(x[:n])))

    return Instance(
        name=name,
        system=system,
        x0=default_initial_state(objective),
        fast_oracle=fast_oracle,
        tracking=tracking_map(objective, _tracking_box(objective)),
        objective=objective,
        params=params,
        default_mode=mode,
        metrics={"dist_to_M": dist_to_rest, "lambda_tracking": tracking_gap},
    )


def linear_decay_instance() -> Instance:
    """Scalar contraction toward the origin, no jumps, no fast block."""

    def in_C(x: np.ndarray) -> bool:
        return True

    def in_D(x: np.ndarray) -> bool:
        return False

    def flow_slow(x: np.ndarray) -> np.ndarray:
        return -x

    def flow_fast(x: np.ndarray) -> np.ndarray:
        return np.zeros(0)

    def jump(x: np.ndarray) -> np.ndarray:
        return x.copy()

    system = TwoTimescaleSystem(dims=(1, 0), in_C=in_C, in_D=in_D,
                                flow_slow_eval=flow_slow,
                                flow_fast_eval=flow_fast,
                                jump_eval=jump, name="linear_decay")
    return Instance(
        name="linear_decay_demo",
        system=system,
        x0=np.array([1.0]),
        default_mode="deterministic",
        metrics={"dist_to_M": lambda x: float(np.linalg.norm(x)),
                 "lambda_tracking": lambda x: math.nan},
    )


INSTANCE_NAMES = ("hhb", "hhb_tt", "hhb_tt_biased", "linear_decay_demo")


def build_instance(name: str,
                   objective: FiniteSumObjective | None = None,
                   params: HeavyBallParams | None = None,
                   bias: float = 0.1) -> Instance:
    """Construct a registered instance by name.

    The objective and momentum parameters are shared across the three
    heavy-ball variants; the variants differ only in how the fast drift
    is sampled.
    """
    if name == "hhb":
        return heavy_ball_instance(objective, params, mode="deterministic",
                                   name="hhb")
    if name == "hhb_tt":
        return heavy_ball_instance(objective, params, mode="stochastic",
                                   name="hhb_tt")
    if name == "hhb_tt_biased":
        return heavy_ball_instance(objective, params, mode="stochastic",
                                   bias=bias, name="hhb_tt_biased")
    if name == "linear_decay_demo":
        return linear_decay_instance()
    raise KeyError(f"unknown instance {name!r}; known: {', '.join(INSTANCE_NAMES)}")
