"""Markov-chain key sequences and pattern counting."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .core import ConfigError, KeySequence, WatermarkConfig


def _inverse_cdf(cdf: np.ndarray, u: float) -> int:
    # cdf[-1] may fall short of 1 by rounding; clamp to the last state
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.size - 1)


def generate_key_sequence(config: WatermarkConfig, n: int, rng: np.random.Generator) -> KeySequence:
    """Sample ``k[0] ~ Q`` then ``k[t] ~ A[k[t-1]]`` by inverse CDF, one variate per key."""
    if n < 1:
        raise ConfigError(f"key sequence length must be >= 1, got {n}")
    q_cdf = np.cumsum(config.Q)
    a_cdf = np.cumsum(np.asarray(config.A), axis=1)
    u = rng.random(n)
    keys = np.empty(n, dtype=np.int64)
    keys[0] = _inverse_cdf(q_cdf, u[0])
    for t in range(1, n):
        keys[t] = _inverse_cdf(a_cdf[keys[t - 1]], u[t])
    return KeySequence(keys)


def _encode_windows(keys: np.ndarray, m: int, base: int) -> np.ndarray:
    """Integer code of every length-m window, most significant key first."""
    w = np.lib.stride_tricks.sliding_window_view(keys, m)
    powers = base ** np.arange(m - 1, -1, -1, dtype=np.int64)
    return w @ powers


def count_patterns(keys, patterns: Iterable[Iterable[int]], m: int) -> int:
    """Number of length-``m`` windows whose keys form a pattern in ``patterns``.

    ``keys`` may be a :class:`KeySequence` (windows are counted inside each
    contiguous run) or a plain integer array.  Returns 0 when no window fits.
    """
    if m < 2:
        raise ConfigError(f"pattern length must be >= 2, got {m}")
    pats = [tuple(int(k) for k in p) for p in patterns]
    if any(len(p) != m for p in pats):
        raise ConfigError(f"every pattern must have length {m}")
    runs = keys.runs() if isinstance(keys, KeySequence) else [np.asarray(keys, dtype=np.int64)]
    if not pats:
        return 0
    base = 1 + max(max(p) for p in pats)
    for run in runs:
        if run.size:
            base = max(base, int(run.max()) + 1)
    codes = np.array(
        [sum(k * base ** (m - 1 - j) for j, k in enumerate(p)) for p in pats], dtype=np.int64
    )
    total = 0
    for run in runs:
        if run.size < m:
            continue
        total += int(np.isin(_encode_windows(run, m, base), codes).sum())
    return total
