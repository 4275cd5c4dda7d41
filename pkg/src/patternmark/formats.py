"""Text file formats: partitions, token sequences and flat key=value configs."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .core import ALTERNATING, ConfigError, InputError, VocabPartition, WatermarkConfig

PARTITION_MAGIC = "patternmark-partition v1"


def write_partition(path, partition: VocabPartition) -> None:
    header = f"{PARTITION_MAGIC} N={partition.vocab_size} l={partition.l} digest={partition.digest}"
    if partition.excluded:
        header += " excluded=" + ",".join(str(t) for t in sorted(partition.excluded))
    lines = [header]
    lines.extend(f"{t}\t{k}" for t, k in enumerate(partition.assignment.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_partition(path) -> VocabPartition:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(PARTITION_MAGIC):
        raise InputError(f"{path}:1: not a {PARTITION_MAGIC} file")
    fields = dict(f.split("=", 1) for f in lines[0][len(PARTITION_MAGIC):].split())
    try:
        N, l = int(fields["N"]), int(fields["l"])
    except (KeyError, ValueError):
        raise InputError(f"{path}:1: header needs integer N= and l= fields") from None
    excluded = [int(t) for t in fields.get("excluded", "").split(",") if t]
    assignment = np.full(N, -1, dtype=np.int64)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            t, k = int(parts[0]), int(parts[1])
        except (IndexError, ValueError):
            raise InputError(f"{path}:{lineno}: expected 'token_id<TAB>key_index'") from None
        if not 0 <= t < N or assignment[t] != -1:
            raise InputError(f"{path}:{lineno}: token id {t} out of range or repeated")
        assignment[t] = k
    if (assignment < 0).any():
        raise InputError(f"{path}: {int((assignment < 0).sum())} token ids have no assignment")
    try:
        part = VocabPartition(N, l, assignment, frozenset(excluded))
    except ConfigError as e:
        raise InputError(f"{path}: {e}") from None
    if "digest" in fields and fields["digest"] != part.digest:
        raise InputError(f"{path}:1: digest mismatch (header {fields['digest']}, content {part.digest})")
    return part


def format_sequence(tokens) -> str:
    return " ".join(str(int(t)) for t in tokens)


def write_sequences(path, sequences) -> None:
    Path(path).write_text("".join(format_sequence(s) + "\n" for s in sequences))


def iter_sequences(path):
    """Yield ``(line_number, tokens)`` for every line of a sequence file."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            try:
                tokens = np.array([int(t) for t in line.split()], dtype=np.int64)
            except ValueError:
                bad = next(t for t in line.split() if not re.fullmatch(r"[+-]?\d+", t))
                raise InputError(f"{path}:{lineno}: malformed token {bad!r}") from None
            yield lineno, tokens


def read_sequences(path) -> list[np.ndarray]:
    return [tokens for _, tokens in iter_sequences(path)]


def read_kv(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def transition_from_a11(a11: float) -> tuple[tuple[float, float], tuple[float, float]]:
    return ((a11, 1.0 - a11), (1.0 - a11, a11))


def parse_patterns(text: str):
    """``alternating`` or comma-separated key strings such as ``010,101``."""
    text = text.strip()
    if text == ALTERNATING:
        return ALTERNATING
    pats = []
    for word in text.split(","):
        word = word.strip()
        if not word.isdigit():
            raise ConfigError(f"pattern {word!r} must be a string of key digits")
        pats.append(tuple(int(ch) for ch in word))
    return tuple(pats)


def config_from_kv(kv: dict[str, str]) -> WatermarkConfig:
    """Build a config from key=value strings.

    Recognized keys: seed, l, a11, transition (rows ``;``-separated, entries
    ``,``-separated), q, delta, m, pattern, fpr.
    """
    known = {"seed", "l", "a11", "transition", "q", "delta", "m", "pattern", "fpr"}
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "seed" not in kv:
        raise ConfigError("config needs a seed")
    try:
        return _config_from_kv(kv)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"bad config value: {e}") from None


def _config_from_kv(kv):
    l = int(kv.get("l", 2))
    if "transition" in kv:
        A = tuple(tuple(float(x) for x in row.split(",")) for row in kv["transition"].split(";"))
    elif "a11" in kv:
        A = transition_from_a11(float(kv["a11"]))
    elif l == 2:
        A = transition_from_a11(0.0)
    else:
        A = tuple(tuple(1.0 / l for _ in range(l)) for _ in range(l))
    Q = tuple(float(x) for x in kv["q"].split(",")) if "q" in kv else tuple(1.0 / l for _ in range(l))
    return WatermarkConfig(
        secret_seed=kv["seed"],
        l=l,
        A=A,
        Q=Q,
        delta=float(kv.get("delta", 1.0)),
        m=int(kv.get("m", 5)),
        pattern_set=parse_patterns(kv.get("pattern", ALTERNATING)),
        fpr_threshold=float(kv.get("fpr", 1e-3)),
    )


def config_to_kv(config: WatermarkConfig) -> dict[str, str]:
    pattern = ALTERNATING if config.is_alternating else ",".join(
        "".join(str(k) for k in p) for p in config.patterns
    )
    return {
        "seed": config.secret_seed.decode("utf-8", errors="surrogateescape"),
        "l": str(config.l),
        "transition": ";".join(",".join(repr(x) for x in row) for row in config.A),
        "q": ",".join(repr(x) for x in config.Q),
        "delta": repr(config.delta),
        "m": str(config.m),
        "pattern": pattern,
        "fpr": repr(config.fpr_threshold),
    }


def write_kv(path, kv: dict[str, str]) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))
