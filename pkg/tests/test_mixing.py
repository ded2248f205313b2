from __future__ import annotations

import itertools
from collections import Counter

import numpy as np
import pytest

from personapkt.data import sample_batches, temperature_mix
from personapkt.exceptions import DataError


def test_temperature_ten_flattens_two_personas() -> None:
    probs = temperature_mix([8, 2], 10.0)
    np.testing.assert_allclose(probs, [0.534602, 0.465398], atol=1e-5)


def test_temperature_one_is_proportional() -> None:
    np.testing.assert_array_equal(temperature_mix([8, 2], 1.0), [0.8, 0.2])


def test_huge_temperature_is_nearly_uniform() -> None:
    probs = temperature_mix([1, 5, 50, 500], 1e6)
    assert probs.max() - probs.min() < 1e-4


@pytest.mark.parametrize("temperature", [0.5, 1.0, 2.0, 10.0, 1e6])
def test_probabilities_sum_to_one(temperature: float) -> None:
    probs = temperature_mix([3, 7, 1, 12, 5], temperature)
    assert abs(probs.sum() - 1.0) < 1e-12


def test_higher_temperature_upweights_small_personas() -> None:
    low = temperature_mix([1, 9], 1.0)
    high = temperature_mix([1, 9], 5.0)
    assert high[0] > low[0]


def test_invalid_inputs() -> None:
    with pytest.raises(ValueError, match="temperature"):
        temperature_mix([1, 2], 0.0)
    with pytest.raises(DataError, match="position 1"):
        temperature_mix([3, 0], 2.0)
    with pytest.raises(DataError):
        temperature_mix([], 2.0)


def test_sample_batches_is_seeded_and_follows_probabilities() -> None:
    pools = {"a": [0, 1, 2], "b": [4]}
    first = list(itertools.islice(sample_batches(pools, [0.75, 0.25], 4, seed=9), 500))
    second = list(itertools.islice(sample_batches(pools, [0.75, 0.25], 4, seed=9), 500))
    assert first == second
    draws = Counter(pid for batch in first for pid, _ in batch)
    assert draws["a"] / 2000 == pytest.approx(0.75, abs=0.03)
    assert all(index in pools[pid] for batch in first for pid, index in batch)
    assert all(len(batch) == 4 for batch in first)


def test_sample_batches_matches_mixing_weights_over_many_draws() -> None:
    pools = {"big": list(range(40)), "mid": list(range(10)), "small": [3]}
    probs = temperature_mix([len(v) for v in pools.values()], 10.0)
    batches = itertools.islice(sample_batches(pools, probs, 4, seed=11), 25_000)
    draws = Counter(pid for batch in batches for pid, _ in batch)
    assert sum(draws.values()) == 100_000
    for pid, expected in zip(pools, probs, strict=True):
        assert draws[pid] / 100_000 == pytest.approx(expected, abs=0.01)


def test_sample_batches_rejects_bad_probabilities() -> None:
    with pytest.raises(ValueError, match="sum to 1"):
        next(sample_batches({"a": [0], "b": [1]}, [0.5, 0.6], 1, seed=0))
    with pytest.raises(DataError, match="'b'"):
        next(sample_batches({"a": [0], "b": []}, [0.5, 0.5], 1, seed=0))
