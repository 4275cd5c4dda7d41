"""Shared domain types, configuration and deterministic randomness."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

GAP = -1
"""Sentinel token id for a position that is not generated yet or is excluded."""

ALTERNATING = "alternating"


class PatternMarkError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PatternMarkError, ValueError):
    """Invalid configuration or parameters."""


class ContractViolation(PatternMarkError, ValueError):
    """A probability vector or oracle output breaks its contract."""


class InputError(PatternMarkError, ValueError):
    """Malformed token or key input."""


def _as_bytes(seed: bytes | str) -> bytes:
    if isinstance(seed, str):
        return seed.encode("utf-8")
    return bytes(seed)


def rng_stream(secret_seed: bytes | str, stream_label: str) -> np.random.Generator:
    """Return a reproducible generator keyed by ``(secret_seed, stream_label)``.

    The pair is hashed with SHA-256 and the digest seeds a PCG64 stream, so
    distinct labels give independent streams and replays are bit-exact.
    """
    h = hashlib.sha256()
    seed = _as_bytes(secret_seed)
    h.update(len(seed).to_bytes(8, "little"))
    h.update(seed)
    h.update(stream_label.encode("utf-8"))
    words = np.frombuffer(h.digest(), dtype="<u4")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words.tolist())))


def alternating_patterns(m: int) -> tuple[tuple[int, ...], ...]:
    """The two length-``m`` strings over keys {0, 1} where keys alternate."""
    a = tuple(i % 2 for i in range(m))
    b = tuple(1 - k for k in a)
    return (a, b)


@dataclass(frozen=True)
class WatermarkConfig:
    secret_seed: bytes
    l: int = 2
    A: tuple[tuple[float, ...], ...] = ((0.0, 1.0), (1.0, 0.0))
    Q: tuple[float, ...] = (0.5, 0.5)
    delta: float = 1.0
    m: int = 5
    pattern_set: str | tuple[tuple[int, ...], ...] = ALTERNATING
    fpr_threshold: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "secret_seed", _as_bytes(self.secret_seed))
        A = tuple(tuple(float(x) for x in row) for row in self.A)
        Q = tuple(float(x) for x in self.Q)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q", Q)
        l = self.l
        if l < 2:
            raise ConfigError(f"key space size l must be >= 2, got {l}")
        if len(A) != l or any(len(row) != l for row in A):
            raise ConfigError(f"transition matrix must be {l}x{l}")
        for i, row in enumerate(A):
            if any(x < 0.0 or x > 1.0 for x in row):
                raise ConfigError(f"transition row {i} has entries outside [0, 1]")
            if abs(sum(row) - 1.0) > 1e-12:
                raise ConfigError(f"transition row {i} sums to {sum(row)!r}, not 1")
        if len(Q) != l or any(x < 0.0 or x > 1.0 for x in Q):
            raise ConfigError("initial distribution must have l entries in [0, 1]")
        if abs(sum(Q) - 1.0) > 1e-12:
            raise ConfigError(f"initial distribution sums to {sum(Q)!r}, not 1")
        if not self.delta >= 0.0:
            raise ConfigError(f"delta must be non-negative, got {self.delta}")
        if self.m < 2:
            raise ConfigError(f"pattern length m must be >= 2, got {self.m}")
        if not 0.0 < self.fpr_threshold <= 1.0:
            raise ConfigError(f"fpr_threshold must be in (0, 1], got {self.fpr_threshold}")
        if self.pattern_set == ALTERNATING:
            if l != 2:
                raise ConfigError("alternating pattern set requires l = 2")
        elif isinstance(self.pattern_set, str):
            raise ConfigError(f"unknown pattern set {self.pattern_set!r}")
        else:
            pats = tuple(tuple(int(k) for k in p) for p in self.pattern_set)
            if not pats:
                raise ConfigError("explicit pattern set is empty")
            if any(len(p) != self.m for p in pats):
                raise ConfigError(f"every pattern must have length m={self.m}")
            if any(k < 0 or k >= l for p in pats for k in p):
                raise ConfigError(f"pattern keys must lie in [0, {l})")
            if len(set(pats)) != len(pats):
                raise ConfigError("duplicate patterns in explicit pattern set")
            object.__setattr__(self, "pattern_set", pats)

    @property
    def is_alternating(self) -> bool:
        return self.pattern_set == ALTERNATING

    @property
    def patterns(self) -> tuple[tuple[int, ...], ...]:
        """Pattern set as explicit key tuples, sorted."""
        if self.is_alternating:
            return tuple(sorted(alternating_patterns(self.m)))
        return tuple(sorted(self.pattern_set))

    def with_(self, **changes) -> "WatermarkConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def digest(self, partition: "VocabPartition | None" = None) -> str:
        """Hex digest of the detection-relevant parameters (seed, l, m, T, partition)."""
        h = hashlib.sha256()
        h.update(self.secret_seed)
        h.update(f"|l={self.l}|m={self.m}|T=".encode())
        h.update(repr(self.patterns).encode())
        if partition is not None:
            h.update(b"|partition=" + partition.digest.encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class VocabPartition:
    """Assignment of every token id in ``[0, vocab_size)`` to a key index."""

    vocab_size: int
    l: int
    assignment: np.ndarray
    excluded: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.shape != (self.vocab_size,):
            raise ConfigError("assignment must cover every token id exactly once")
        if a.size and (a.min() < 0 or a.max() >= self.l):
            raise ConfigError(f"key indices must lie in [0, {self.l})")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "excluded", frozenset(int(t) for t in self.excluded))
        if any(t < 0 or t >= self.vocab_size for t in self.excluded):
            raise ConfigError("excluded token ids must lie in the vocabulary")

    def part(self, key: int) -> np.ndarray:
        """Token ids belonging to part ``key``."""
        return np.flatnonzero(self.assignment == key)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.l)

    @property
    def excluded_mask(self) -> np.ndarray:
        mask = np.zeros(self.vocab_size, dtype=bool)
        if self.excluded:
            mask[list(self.excluded)] = True
        return mask

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"N={self.vocab_size}|l={self.l}|".encode())
        h.update(self.assignment.astype("<i8").tobytes())
        h.update(repr(sorted(self.excluded)).encode())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, VocabPartition):
            return NotImplemented
        return (
            self.vocab_size == other.vocab_size
            and self.l == other.l
            and self.excluded == other.excluded
            and np.array_equal(self.assignment, other.assignment)
        )

    def __hash__(self):
        return hash(self.digest)


def build_partition(
    secret_seed: bytes | str, vocab_size: int, l: int, exclude: Iterable[int] = ()
) -> VocabPartition:
    """Split ``[0, vocab_size)`` into ``l`` balanced parts with a keyed permutation.

    Position ``p`` of the permutation goes to key ``p mod l``, so part sizes
    differ by at most one.  Excluded tokens keep an assignment (the map stays
    total) but are never promoted and are skipped by the detector.
    """
    if l < 2:
        raise ConfigError(f"l must be >= 2, got {l}")
    if vocab_size < l:
        raise ConfigError(f"vocab_size ({vocab_size}) must be >= l ({l})")
    perm = rng_stream(secret_seed, f"partition/N={vocab_size}/l={l}").permutation(vocab_size)
    assignment = np.empty(vocab_size, dtype=np.int64)
    assignment[perm] = np.arange(vocab_size) % l
    return VocabPartition(vocab_size, l, assignment, frozenset(exclude))


@dataclass(frozen=True)
class KeySequence:
    """Key indices by position.

    ``breaks`` lists indices where a new contiguous run starts (other than 0);
    pattern windows never straddle a break.
    """

    keys: np.ndarray
    breaks: tuple[int, ...] = ()

    def __post_init__(self):
        k = np.asarray(self.keys, dtype=np.int64).copy()
        k.setflags(write=False)
        object.__setattr__(self, "keys", k)
        object.__setattr__(self, "breaks", tuple(sorted(set(int(b) for b in self.breaks))))

    def __len__(self):
        return len(self.keys)

    def runs(self) -> list[np.ndarray]:
        bounds = [0, *[b for b in self.breaks if 0 < b < len(self.keys)], len(self.keys)]
        return [self.keys[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


@dataclass(frozen=True)
class GenerationOrder:
    """Position visitation schedule.

    ``order`` is the first full pass (a permutation of 0-based positions).
    ``remask`` holds, per refinement round, how many lowest-confidence
    positions are masked and regenerated.  With ``parallel`` set, every
    position in a round is conditioned on the context as it stood when the
    round began.
    """

    order: np.ndarray
    remask: tuple[int, ...] = ()
    parallel: bool = False

    def __post_init__(self):
        o = np.asarray(self.order, dtype=np.int64).copy()
        n = o.size
        if n == 0 or not np.array_equal(np.sort(o), np.arange(n)):
            raise ConfigError("generation order must be a permutation of 0..n-1")
        if any(r < 0 or r > n for r in self.remask):
            raise ConfigError("remask counts must lie in [0, n]")
        o.setflags(write=False)
        object.__setattr__(self, "order", o)
        object.__setattr__(self, "remask", tuple(int(r) for r in self.remask))

    def __len__(self):
        return self.order.size


@dataclass(frozen=True)
class DetectionReport:
    observed_count: int
    window_count: int
    p_value: float
    watermarked: bool
    config_digest: str
    n: int = 0
    effective_length: int = 0

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "effective_length": self.effective_length,
            "count": self.observed_count,
            "windows": self.window_count,
            "p_value": self.p_value,
            "watermarked": self.watermarked,
            "config_digest": self.config_digest,
        }


def as_tokens(tokens: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(tokens, dtype=np.int64)
    if arr.ndim != 1:
        raise InputError("token sequence must be one-dimensional")
    return arr
