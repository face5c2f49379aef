import numpy as np
import pytest

from ccclab.rng import trial_uniforms, uniforms_for_trial


def test_range_and_shape():
    u = trial_uniforms(42, 1000)
    assert u.shape == (1000, 4)
    assert u.min() >= 0.0 and u.max() < 1.0


def test_trial_depends_only_on_seed_and_index():
    batch = trial_uniforms(7, 50)
    for i in (0, 13, 49):
        np.testing.assert_array_equal(batch[i], uniforms_for_trial(7, i))
    np.testing.assert_array_equal(batch[20:30], trial_uniforms(7, 10, start=20))


def test_multi_block_trials():
    batch = trial_uniforms(7, 20, blocks=2)
    assert batch.shape == (20, 8)
    np.testing.assert_array_equal(batch[5], uniforms_for_trial(7, 5, blocks=2))


def test_streams_and_seeds_differ():
    assert not np.array_equal(trial_uniforms(1, 4), trial_uniforms(2, 4))
    assert not np.array_equal(trial_uniforms(1, 4), trial_uniforms(1, 4, stream=1))


def test_full_64_bit_seed():
    trial_uniforms((1 << 64) - 1, 2)
    with pytest.raises(ValueError):
        trial_uniforms(1 << 64, 2)
