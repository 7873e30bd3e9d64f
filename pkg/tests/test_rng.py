"""Counter-based RNG: purity, stream separation, draw quality."""

import math

import numpy as np
import pytest

from ttsa._rng import CounterRng, StepRng, _mix

_MASK = (1 << 64) - 1


def _mix_reference(z: int) -> int:
    # independent straight-line transcription of the splitmix64 finalizer
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def test_mix_matches_reference_finalizer():
    for z in [0, 1, 2, 63, 2**32, 2**63, _MASK, 0xDEADBEEF]:
        assert _mix(z) == _mix_reference(z)


def test_mix_known_zero_input():
    # splitmix64 of seed 0 advances to the golden increment and mixes it;
    # value frozen from the reference transcription above
    assert _mix(0) == _mix_reference(0) == 16294208416658607535


def test_draws_are_pure_functions_of_seed_step_index():
    a = [StepRng(9, 41).uniform() for _ in range(5)]
    b = [StepRng(9, 41).uniform() for _ in range(5)]
    assert a == b


def test_replaying_a_step_ignores_other_steps():
    rng = CounterRng(7)
    direct = rng.step(100).uniform()
    for k in range(100):
        rng.step(k).uniform()
    assert rng.step(100).uniform() == direct


def test_distinct_steps_give_distinct_streams():
    us = {StepRng(3, k)._next_u64() for k in range(1000)}
    assert len(us) == 1000


def test_distinct_seeds_give_distinct_streams():
    us = {StepRng(s, 5)._next_u64() for s in range(1000)}
    assert len(us) == 1000


def test_uniform_range_and_moments():
    rng = CounterRng(0)
    us = np.array([rng.step(k).uniform() for k in range(20000)])
    assert np.all(us >= 0.0) and np.all(us < 1.0)
    # mean 1/2 with sd 1/(12 n)^(1/2) ~ 0.002; allow five sigmas
    assert abs(us.mean() - 0.5) < 5 * math.sqrt(1 / 12 / len(us))


def test_normal_moments():
    rng = CounterRng(1)
    zs = np.array([rng.step(k).normal() for k in range(20000)])
    assert np.all(np.isfinite(zs))
    n = len(zs)
    assert abs(zs.mean()) < 5 / math.sqrt(n)
    assert abs(zs.var() - 1.0) < 5 * math.sqrt(2 / n)


def test_integers_cover_small_range_uniformly():
    rng = CounterRng(2)
    counts = np.bincount([rng.step(k).integers(10) for k in range(50000)],
                         minlength=10)
    assert counts.min() > 0
    # each bin expects 5000 with sd ~ 67
    assert np.all(np.abs(counts - 5000) < 5 * math.sqrt(5000))


def test_integers_rejects_nonpositive():
    with pytest.raises(ValueError):
        StepRng(0, 0).integers(0)


def test_consecutive_draws_within_step_differ():
    r = StepRng(11, 13)
    assert len({r._next_u64() for _ in range(100)}) == 100
