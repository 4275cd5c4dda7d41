"""Exact null distribution of pattern counts under uniform i.i.d. keys.

Three routes compute the same law: a general dynamic program over
(count, last m-1 keys), a compact one for the two alternating patterns over
two keys that tracks only the length of the alternating tail, and exhaustive
enumeration used as ground truth for small cases.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .core import ConfigError, alternating_patterns

BRUTE_FORCE_LIMIT = 2**24
PVALUE_FLOOR = 1e-300


@dataclass(frozen=True)
class NullDistribution:
    n: int
    m: int
    mass: np.ndarray

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=np.float64).copy()
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @property
    def window_count(self) -> int:
        return self.n - self.m + 1

    def tail(self, c: int) -> float:
        return tail_probability(self, c)

    def tails(self) -> np.ndarray:
        """Upper tails for every count, accumulated from the top (smallest terms first)."""
        return np.clip(np.cumsum(self.mass[::-1])[::-1], 0.0, 1.0)


def _normalize_patterns(l: int, m: int, patterns: Iterable[Iterable[int]]) -> tuple[tuple[int, ...], ...]:
    pats = tuple(sorted(set(tuple(int(k) for k in p) for p in patterns)))
    if not pats:
        raise ConfigError("pattern set must be non-empty")
    for p in pats:
        if len(p) != m:
            raise ConfigError(f"pattern {p} does not have length {m}")
        if any(k < 0 or k >= l for k in p):
            raise ConfigError(f"pattern {p} has keys outside [0, {l})")
    return pats


def _check_lengths(n: int, m: int):
    if m < 2:
        raise ConfigError(f"pattern length must be >= 2, got {m}")
    if n < m:
        raise ConfigError(f"sequence length {n} is shorter than pattern length {m}: no windows")


def pattern_distribution_general(l: int, n: int, m: int, patterns) -> NullDistribution:
    """Distribution of the pattern count for a uniformly random key sequence.

    Runs the DP over states (count c, last m-1 keys s).  The m-1 key prefix
    starts uniform with count 0; each new key k extends the previous state
    s' = [k, s_1..s_{m-2}] to s and increments the count when the window
    [k, s] is a pattern.  Only two layers are kept, so memory is O(n l^(m-1)).
    """
    _check_lengths(n, m)
    pats = _normalize_patterns(l, m, patterns)
    n_states = l ** (m - 1)
    windows = n - m + 1

    # state s is coded base l with s_1 most significant
    s = np.arange(n_states)
    # hit[k, s] is whether the window [k, s] is a pattern
    hit = np.zeros((l, n_states), dtype=bool)
    for p in pats:
        code = 0
        for key in p[1:]:
            code = code * l + key
        hit[p[0], code] = True
    # predecessor state for new state s and dropped key k
    pred = np.arange(l)[:, None] * l ** (m - 2) + (s // l)[None, :]

    prob = np.zeros((n_states, windows + 1))
    prob[:, 0] = float(l) ** -(m - 1)
    inv_l = 1.0 / l
    for i in range(m, n + 1):
        top = i - m + 1  # counts 0..top now reachable
        new = np.zeros_like(prob)
        for k in range(l):
            src = prob[pred[k], :top]
            h = hit[k]
            miss = ~h
            new[miss, :top] += src[miss]
            new[h, 1 : top + 1] += src[h]
        new *= inv_l
        prob = new
    return NullDistribution(n, m, prob.sum(axis=0))


def pattern_distribution_alternating(n: int, m: int) -> NullDistribution:
    """Same law as the general DP with l=2 and the two alternating patterns, in O(n^2 m).

    State is (count c, M) where M is the length of the longest alternating
    tail, capped at m-1.  A new key either continues the alternation
    (probability 1/2) or restarts the tail at length 1.  Continuing from a
    capped tail completes a length-m alternating window.  For m <= 2 this
    defers to the general DP.
    """
    if m <= 2:
        return pattern_distribution_general(2, n, m, alternating_patterns(m))
    _check_lengths(n, m)
    windows = n - m + 1
    # prob[M-1, c]
    prob = np.zeros((m - 1, windows + 1))
    prob[0, 0] = 1.0
    for _ in range(2, m):
        new = np.zeros_like(prob)
        new[0, 0] = 0.5 * prob[:, 0].sum()
        new[1:, 0] = 0.5 * prob[:-1, 0]
        prob = new
    for i in range(m, n + 1):
        top = i - m + 1
        new = np.zeros_like(prob)
        new[0, :top] = 0.5 * prob[:, :top].sum(axis=0)
        new[1:, :top] = 0.5 * prob[:-1, :top]
        new[m - 2, 1 : top + 1] += 0.5 * prob[m - 2, :top]
        prob = new
    return NullDistribution(n, m, prob.sum(axis=0))


def brute_force_counts(l: int, n: int, m: int, patterns) -> list[int]:
    """Exact integer histogram of pattern counts over all l**n key sequences.

    Sequence x in [0, l**n) is read as n base-l digits, most significant
    first; the window starting at j is then ``x // l**(n-m-j) % l**m``.
    """
    _check_lengths(n, m)
    if l**n > BRUTE_FORCE_LIMIT:
        raise ConfigError(f"enumeration of {l}**{n} sequences exceeds the limit {BRUTE_FORCE_LIMIT}")
    pats = _normalize_patterns(l, m, patterns)
    is_pattern = np.zeros(l**m, dtype=bool)
    for p in pats:
        is_pattern[sum(k * l ** (m - 1 - j) for j, k in enumerate(p))] = True
    hist = np.zeros(n - m + 2, dtype=np.int64)
    chunk = 1 << 20
    for start in range(0, l**n, chunk):
        x = np.arange(start, min(start + chunk, l**n), dtype=np.int64)
        counts = np.zeros(x.size, dtype=np.int64)
        for j in range(n - m + 1):
            counts += is_pattern[x // l ** (n - m - j) % l**m]
        hist += np.bincount(counts, minlength=n - m + 2)
    return [int(h) for h in hist]


def brute_force_distribution(l: int, n: int, m: int, patterns, exact: bool = False):
    """Ground-truth distribution by enumerating every key sequence.

    With ``exact=True`` returns a list of :class:`fractions.Fraction`.
    """
    hist = brute_force_counts(l, n, m, patterns)
    total = l**n
    if exact:
        return [Fraction(h, total) for h in hist]
    return NullDistribution(n, m, np.array([h / total for h in hist]))


def tail_probability(dist: NullDistribution, c: int) -> float:
    """P(count >= c); exactly 1.0 at c <= 0 and 0.0 beyond the support."""
    if c <= 0:
        return 1.0
    if c > dist.window_count:
        return 0.0
    return min(1.0, math.fsum(dist.mass[c:]))


def patterns_digest(patterns) -> str:
    return hashlib.sha256(repr(tuple(sorted(tuple(p) for p in patterns))).encode()).hexdigest()[:16]


_cache: dict[tuple, NullDistribution] = {}
_cache_lock = threading.Lock()


def null_distribution(l: int, n: int, m: int, patterns, method: str = "auto") -> NullDistribution:
    """Cached distribution; ``auto`` picks the alternating DP whenever it applies."""
    pats = _normalize_patterns(l, m, patterns)
    if method == "auto":
        use_alt = l == 2 and m >= 3 and set(pats) == set(alternating_patterns(m))
        method = "alternating" if use_alt else "general"
    if method not in ("general", "alternating"):
        raise ConfigError(f"unknown method {method!r}")
    if method == "alternating" and (l != 2 or set(pats) != set(alternating_patterns(m))):
        raise ConfigError("alternating method needs l=2 and the alternating pattern set")
    key = (l, n, m, patterns_digest(pats), method)
    with _cache_lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit
    if method == "alternating":
        dist = pattern_distribution_alternating(n, m)
    else:
        dist = pattern_distribution_general(l, n, m, pats)
    with _cache_lock:
        _cache.setdefault(key, dist)
    return dist


def clear_cache():
    with _cache_lock:
        _cache.clear()
