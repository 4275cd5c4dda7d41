"""Watermarked sampling for order-agnostic generators."""

from __future__ import annotations

import math
from typing import Protocol, runtime_checkable

import numpy as np

from .core import GAP, ConfigError, ContractViolation, GenerationOrder, KeySequence, VocabPartition, WatermarkConfig

PROB_TOL = 1e-9


@runtime_checkable
class DistributionOracle(Protocol):
    """Anything that returns P(token at ``position`` | visible context).

    ``context`` holds token ids with :data:`GAP` at unfilled positions.
    Oracles that ignore the context may also expose ``table(n)`` returning an
    ``(n, vocab_size)`` array of per-position distributions; the sampler
    then skips the per-step queries.
    """

    vocab_size: int

    def conditional(self, position: int, context: np.ndarray) -> np.ndarray: ...


def _check_distribution(p: np.ndarray, n_expected: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or (n_expected is not None and p.size != n_expected):
        raise ContractViolation(f"distribution has shape {p.shape}, expected ({n_expected},)")
    if not np.all(np.isfinite(p)) or p.min() < 0.0:
        raise ContractViolation("distribution has negative or non-finite entries")
    total = p.sum()
    if abs(total - 1.0) > PROB_TOL:
        raise ContractViolation(f"distribution sums to {total!r}, not 1")
    return p


def promotion_mask(partition: VocabPartition, key: int) -> np.ndarray:
    mask = partition.assignment == key
    if partition.excluded:
        mask &= ~partition.excluded_mask
    return mask


def shift_distribution(p, partition: VocabPartition, key: int, delta: float) -> np.ndarray:
    """Multiply the mass of part ``key`` by e^delta and renormalize.

    Excluded tokens are treated as outside the promoted part.  At delta=0
    the input is returned unchanged (as a fresh array).
    """
    p = _check_distribution(p, partition.vocab_size)
    if not delta >= 0.0:
        raise ContractViolation(f"delta must be non-negative, got {delta}")
    if delta == 0.0:
        return p.copy()
    return _shift(p, promotion_mask(partition, key), delta)


def _shift(p: np.ndarray, mask: np.ndarray, delta: float) -> np.ndarray:
    boost = math.exp(delta)
    inside = np.where(mask, p, 0.0).sum()
    z = (p.sum() - inside) + boost * inside
    out = p / z
    out[mask] *= boost
    return out


def _shift_rows(P: np.ndarray, mask: np.ndarray, delta: float) -> np.ndarray:
    boost = math.exp(delta)
    inside = np.where(mask, P, 0.0).sum(axis=1)
    z = (P.sum(axis=1) - inside) + boost * inside
    out = P / z[:, None]
    out[mask] *= boost
    return out


def sample_index(p: np.ndarray, u: float) -> int:
    """Inverse-CDF draw of one index from ``p`` with the uniform variate ``u``."""
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, p.size - 1)


def _sample_rows(P: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(P, axis=1)
    idx = (cdf < (u * cdf[:, -1])[:, None]).sum(axis=1)
    # equal to searchsorted(side="right") except on exact ties with the target
    exact = (cdf == (u * cdf[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx + exact, P.shape[1] - 1)


def generate_watermarked(oracle, order: GenerationOrder, config: WatermarkConfig,
                         partition: VocabPartition, keys: KeySequence | np.ndarray,
                         rng: np.random.Generator) -> np.ndarray:
    """Fill every position, promoting the part of the key assigned to that POSITION.

    Position p always uses ``keys[p]`` no matter when it is generated or how
    often a refinement round regenerates it, so the detector, which scans
    positions left to right, sees the Markov key structure for any order.
    """
    tokens, _ = generate_with_trace(oracle, order, config, partition, keys, rng)
    return tokens


def generate_with_trace(oracle, order, config, partition, keys, rng):
    """Like :func:`generate_watermarked`; also returns the model log-probability of each final token."""
    if not isinstance(order, GenerationOrder):
        order = GenerationOrder(order)
    keys = np.asarray(keys.keys if isinstance(keys, KeySequence) else keys, dtype=np.int64)
    n = len(order)
    if keys.size != n:
        raise ConfigError(f"key sequence length {keys.size} does not match order length {n}")
    if oracle.vocab_size != partition.vocab_size:
        raise ConfigError("oracle and partition disagree on vocab_size")
    if hasattr(oracle, "table"):
        return _generate_context_free(oracle, order, config, partition, keys, rng)

    masks = [promotion_mask(partition, k) for k in range(partition.l)]
    delta = config.delta
    tokens = np.full(n, GAP, dtype=np.int64)
    logp = np.zeros(n)
    conf = np.zeros(n)

    def draw(pos, context):
        p = _check_distribution(oracle.conditional(int(pos), context), partition.vocab_size)
        w = _shift(p, masks[keys[pos]], delta) if delta > 0 else p
        tok = sample_index(w, rng.random())
        return tok, p[tok], w[tok]

    def run_pass(positions):
        frozen = tokens.copy() if order.parallel else None
        for pos in positions:
            tok, pm, pw = draw(pos, frozen if frozen is not None else tokens)
            tokens[pos] = tok
            logp[pos] = math.log(pm) if pm > 0 else -math.inf
            conf[pos] = pw

    run_pass(order.order)
    for count in order.remask:
        if count == 0:
            continue
        # lowest watermarked-probability positions first, ties by position
        revisit = np.lexsort((np.arange(n), conf))[:count]
        revisit.sort()
        tokens[revisit] = GAP
        run_pass(revisit)
    return tokens, logp


def _generate_context_free(oracle, order, config, partition, keys, rng):
    # one variate per step in step order, same as the sequential path
    n = len(order)
    P = np.asarray(oracle.table(n), dtype=np.float64)
    sums = P.sum(axis=1)
    if P.shape != (n, partition.vocab_size) or P.min() < 0 or np.abs(sums - 1).max() > PROB_TOL:
        raise ContractViolation("oracle table is not a stack of valid distributions")
    W = P
    if config.delta > 0:
        masks = np.stack([promotion_mask(partition, k) for k in range(partition.l)])
        W = _shift_rows(P, masks[keys], config.delta)
    tokens = np.empty(n, dtype=np.int64)
    u = rng.random(n)
    tokens[order.order] = _sample_rows(W[order.order], u)
    conf = W[np.arange(n), tokens]
    for count in order.remask:
        if count == 0:
            continue
        revisit = np.sort(np.lexsort((np.arange(n), conf))[:count])
        u = rng.random(count)
        tokens[revisit] = _sample_rows(W[revisit], u)
        conf[revisit] = W[revisit, tokens[revisit]]
    with np.errstate(divide="ignore"):
        logp = np.log(P[np.arange(n), tokens])
    return tokens, logp
