"""
Counter-based uniform draws for reproducible, order-independent sampling.

Trial ``i`` of a run keyed by ``(seed, stream)`` consumes the Philox blocks at
counters ``i*blocks .. i*blocks + blocks - 1`` (four 64-bit words each; one
block unless more draws per trial are requested).  Draws for any trial
can therefore be regenerated on their own, and a batch of trials can be
generated in one vectorized call without changing any trial's values.
"""
from __future__ import annotations

import numpy as np

DRAWS_PER_TRIAL = 4
_SEED_MASK = (1 << 64) - 1
_TO_UNIT = 2.0**-53


def _key(seed: int, stream: int) -> int:
    if not 0 <= seed <= _SEED_MASK:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    if not 0 <= stream <= _SEED_MASK:
        raise ValueError(f"stream must be a 64-bit unsigned integer, got {stream!r}")
    return seed | (stream << 64)


def trial_uniforms(seed: int, count: int, start: int = 0, stream: int = 0, blocks: int = 1) -> np.ndarray:
    """Uniform draws in [0, 1) for trials ``start .. start+count-1``; shape ``(count, 4*blocks)``."""
    if count < 0 or start < 0 or blocks < 1:
        raise ValueError("count and start must be non-negative, blocks positive")
    width = DRAWS_PER_TRIAL * blocks
    gen = np.random.Philox(key=_key(seed, stream), counter=start * blocks)
    raw = gen.random_raw(count * width).reshape(count, width)
    return (raw >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def uniforms_for_trial(seed: int, trial: int, stream: int = 0, blocks: int = 1) -> np.ndarray:
    return trial_uniforms(seed, 1, start=trial, stream=stream, blocks=blocks)[0]
