"""Synthetic order-agnostic models, decoding orders and the random token attack."""

from __future__ import annotations

import hashlib
import math
import threading

import numpy as np

from .core import GAP, ConfigError, GenerationOrder, InputError, _as_bytes, as_tokens, rng_stream

IID = "iid"
CONTEXT_HASH = "ctx"

LEFT_TO_RIGHT = "ltr"
RANDOM_PERMUTATION = "perm"
MASK_PREDICT = "maskpredict"


class IidDirichletOracle:
    """Context-free model: position p gets its own Dirichlet(alpha) draw, fixed forever.

    Rows are drawn in position order from one keyed stream, so row p is the
    same regardless of which positions were requested first.
    """

    def __init__(self, vocab_size: int, entropy_knob: float, seed: bytes | str):
        self.vocab_size = vocab_size
        self.entropy_knob = float(entropy_knob)
        self.seed = _as_bytes(seed)
        self._rng = rng_stream(self.seed, "oracle/iid")
        self._rows = np.empty((0, vocab_size))
        self._lock = threading.Lock()

    def table(self, n: int) -> np.ndarray:
        with self._lock:
            have = self._rows.shape[0]
            if n > have:
                alpha = np.full(self.vocab_size, self.entropy_knob)
                fresh = self._rng.dirichlet(alpha, size=n - have)
                self._rows = np.vstack([self._rows, fresh / fresh.sum(axis=1, keepdims=True)])
            return self._rows[:n]

    def conditional(self, position: int, context=None) -> np.ndarray:
        return self.table(position + 1)[position].copy()


class ContextHashOracle:
    """Model whose conditional depends on the filled context.

    Each query hashes (seed, position, positions and ids of non-GAP tokens)
    into a fresh generator and draws a Dirichlet(alpha) vector from it.
    """

    def __init__(self, vocab_size: int, entropy_knob: float, seed: bytes | str):
        self.vocab_size = vocab_size
        self.entropy_knob = float(entropy_knob)
        self.seed = _as_bytes(seed)
        self._alpha = np.full(vocab_size, self.entropy_knob)

    def conditional(self, position: int, context) -> np.ndarray:
        ctx = np.asarray(context, dtype="<i8")
        filled = np.flatnonzero(ctx != GAP)
        h = hashlib.sha256(self.seed)
        h.update(int(position).to_bytes(8, "little"))
        h.update(filled.astype("<i8").tobytes())
        h.update(ctx[filled].tobytes())
        words = np.frombuffer(h.digest(), dtype="<u4").tolist()
        g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
        p = g.dirichlet(self._alpha)
        return p / p.sum()


def make_oracle(kind: str, vocab_size: int, entropy_knob: float, seed: bytes | str):
    if vocab_size < 2:
        raise ConfigError(f"vocab_size must be >= 2, got {vocab_size}")
    if not entropy_knob > 0:
        raise ConfigError(f"entropy_knob must be positive, got {entropy_knob}")
    if kind == IID:
        return IidDirichletOracle(vocab_size, entropy_knob, seed)
    if kind == CONTEXT_HASH:
        return ContextHashOracle(vocab_size, entropy_knob, seed)
    raise ConfigError(f"unknown oracle kind {kind!r}")


def make_order(kind: str, n: int, rounds: int = 1, rng: np.random.Generator | None = None) -> GenerationOrder:
    """Build a decoding schedule.

    ``maskpredict`` fills every position in one parallel round, then each
    later round t = 2..rounds re-masks the floor(n*(rounds-t+1)/rounds)
    lowest-confidence positions (linear decay) and regenerates them.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if kind == LEFT_TO_RIGHT:
        return GenerationOrder(np.arange(n))
    if kind == RANDOM_PERMUTATION:
        if rng is None:
            raise ConfigError("random permutation order needs an rng")
        return GenerationOrder(rng.permutation(n))
    if kind == MASK_PREDICT:
        if rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {rounds}")
        remask = tuple(n * (rounds - t) // rounds for t in range(1, rounds))
        return GenerationOrder(np.arange(n), remask=remask, parallel=True)
    raise ConfigError(f"unknown order kind {kind!r}")


def attack_size(n: int, epsilon: float) -> int:
    return int(math.floor(epsilon * n + 0.5))


def random_token_attack(tokens, epsilon: float, vocab_size: int, rng: np.random.Generator) -> np.ndarray:
    """Replace round(epsilon*n) distinct random positions with a different uniform token.

    Draws are made for every position up front, so for a fixed stream the
    modified set at a smaller epsilon is a subset of the one at a larger.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon must be in [0, 1], got {epsilon}")
    if vocab_size < 2:
        raise ConfigError("attack needs vocab_size >= 2")
    tokens = as_tokens(tokens)
    n = tokens.size
    if ((tokens < 0) | (tokens >= vocab_size)).any():
        raise InputError("attack input must be fully generated and inside the vocabulary")
    perm = rng.permutation(n)
    offsets = rng.integers(1, vocab_size, size=n)
    hit = perm[: attack_size(n, epsilon)]
    out = tokens.copy()
    out[hit] = (tokens[hit] + offsets[hit]) % vocab_size
    return out
