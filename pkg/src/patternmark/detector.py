"""Pattern-count watermark detection and a fixed green-list baseline."""

from __future__ import annotations

import numpy as np
from scipy.stats import binom

from .core import GAP, DetectionReport, InputError, KeySequence, VocabPartition, WatermarkConfig, as_tokens
from .keygen import count_patterns
from .nulldist import null_distribution, tail_probability


def _usable(tokens: np.ndarray, partition: VocabPartition) -> np.ndarray:
    bad = (tokens != GAP) & ((tokens < 0) | (tokens >= partition.vocab_size))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InputError(
            f"token id {int(tokens[i])} at position {i} is outside the vocabulary [0, {partition.vocab_size})"
        )
    ok = tokens != GAP
    if partition.excluded:
        ok &= ~partition.excluded_mask[np.where(ok, tokens, 0)]
    return ok


def recover_keys(tokens, partition: VocabPartition) -> KeySequence:
    """Map each token to its part's key, dropping GAP and excluded tokens.

    Each dropped stretch becomes a break in the returned sequence so that
    no pattern window spans it.
    """
    tokens = as_tokens(tokens)
    ok = _usable(tokens, partition)
    keys = partition.assignment[tokens[ok]]
    # a kept token starts a new run when the token before it was dropped
    kept_idx = np.flatnonzero(ok)
    breaks = np.flatnonzero(np.diff(kept_idx) > 1) + 1
    return KeySequence(keys, tuple(int(b) for b in breaks))


def detect(tokens, config: WatermarkConfig, partition: VocabPartition) -> DetectionReport:
    """Count patterns in the recovered keys and test against the exact null.

    With breaks, the null is taken for the concatenated length, which also
    counts windows across run boundaries; this can only overstate the null
    count, so the reported p-value is conservative.
    """
    tokens = as_tokens(tokens)
    if partition.l != config.l:
        raise InputError(f"partition has l={partition.l} but config has l={config.l}")
    keys = recover_keys(tokens, partition)
    n_eff = len(keys)
    digest = config.digest(partition)
    windows = max(n_eff - config.m + 1, 0)
    if n_eff < config.m:
        return DetectionReport(0, windows, 1.0, False, digest, tokens.size, n_eff)
    patterns = config.patterns
    c = count_patterns(keys, patterns, config.m)
    dist = null_distribution(config.l, n_eff, config.m, patterns)
    p = tail_probability(dist, c)
    return DetectionReport(c, windows, p, p <= config.fpr_threshold, digest, tokens.size, n_eff)


def detect_greenlist_baseline(tokens, partition: VocabPartition, green_key: int, f: float) -> DetectionReport:
    """Exact binomial upper-tail test on the number of tokens in part ``green_key``."""
    tokens = as_tokens(tokens)
    if not 0 <= green_key < partition.l:
        raise InputError(f"green key {green_key} outside [0, {partition.l})")
    ok = _usable(tokens, partition)
    kept = tokens[ok]
    n_eff = kept.size
    digest = f"greenlist:{partition.digest}:{green_key}"
    if n_eff == 0:
        return DetectionReport(0, 0, 1.0, False, digest, tokens.size, 0)
    green = partition.assignment == green_key
    if partition.excluded:
        green &= ~partition.excluded_mask
    gamma = green.sum() / (partition.vocab_size - len(partition.excluded))
    c = int(green[kept].sum())
    p = float(binom.sf(c - 1, n_eff, gamma)) if c > 0 else 1.0
    return DetectionReport(c, n_eff, p, p <= f, digest, tokens.size, n_eff)
