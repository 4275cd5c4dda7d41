"""Generate -> attack -> detect sweeps over synthetic oracles.

Each cell of the grid is one combination of scheme, delta, m, a11, epsilon
and n.  A cell produces one JSON record with TPR at every threshold of the
reporting grid, the empirical FPR on an unwatermarked corpus and the mean
per-token negative log-likelihood of the watermarked output.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigError, WatermarkConfig, build_partition, rng_stream
from .detector import detect, detect_greenlist_baseline
from .formats import transition_from_a11
from .keygen import generate_key_sequence
from .sampler import generate_with_trace
from .sim import make_oracle, make_order, random_token_attack

log = logging.getLogger(__name__)

FPR_GRID = (0.1, 0.01, 0.001, 0.0001, 0.00001)
PATTERNMARK = "patternmark"
GREENLIST = "greenlist"
DEFAULT_MAX_TOKEN_STEPS = 50_000_000


@dataclass(frozen=True)
class BenchCell:
    scheme: str
    delta: float
    m: int | None
    a11: float | None
    epsilon: float
    n: int
    count: int = 200
    null_count: int = 200
    vocab_size: int = 20
    oracle: str = "iid"
    entropy: float = 0.5
    order: str = "ltr"
    rounds: int = 1
    seed: str = "bench"
    fprs: tuple[float, ...] = FPR_GRID

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]

    def token_steps(self) -> int:
        return (self.count + self.null_count) * self.n * max(self.rounds, 1)


@dataclass
class CellResult:
    cell: BenchCell
    p_values: np.ndarray
    null_p_values: np.ndarray
    mean_nll: float
    tpr: dict[float, float] = field(default_factory=dict)
    empirical_fpr: dict[float, float] = field(default_factory=dict)

    def record(self) -> dict:
        c = self.cell
        return {
            "cell": c.digest,
            "scheme": c.scheme,
            "delta": c.delta,
            "m": c.m,
            "a11": c.a11,
            "epsilon": c.epsilon,
            "n": c.n,
            "count": c.count,
            "null_count": c.null_count,
            "oracle": c.oracle,
            "entropy": c.entropy,
            "order": c.order,
            "tpr": {repr(f): v for f, v in self.tpr.items()},
            "empirical_fpr": {repr(f): v for f, v in self.empirical_fpr.items()},
            "mean_nll": self.mean_nll,
        }


def _setup(cell: BenchCell, delta: float):
    if cell.scheme == PATTERNMARK:
        cfg = WatermarkConfig(
            secret_seed=cell.seed, l=2, A=transition_from_a11(cell.a11), Q=(0.5, 0.5),
            delta=delta, m=cell.m,
        )
    elif cell.scheme == GREENLIST:
        cfg = WatermarkConfig(secret_seed=cell.seed, l=2, A=((1.0, 0.0), (0.0, 1.0)), Q=(1.0, 0.0),
                              delta=delta, m=2)
    else:
        raise ConfigError(f"unknown scheme {cell.scheme!r}")
    return cfg, build_partition(cell.seed, cell.vocab_size, 2)


def _score(cell, tokens, cfg, partition) -> float:
    if cell.scheme == GREENLIST:
        return detect_greenlist_baseline(tokens, partition, 0, 1.0).p_value
    return detect(tokens, cfg, partition).p_value


def _generate(cell, cfg, partition, i, label):
    seed = cell.seed
    oracle = make_oracle(cell.oracle, cell.vocab_size, cell.entropy, f"{seed}/oracle/{i}")
    order = make_order(cell.order, cell.n, cell.rounds, rng_stream(seed, f"{label}/order/{i}"))
    keys = generate_key_sequence(cfg, cell.n, rng_stream(seed, f"{label}/keygen/{i}"))
    return generate_with_trace(oracle, order, cfg, partition, keys, rng_stream(seed, f"{label}/sampling/{i}"))


def run_cell(cell: BenchCell) -> CellResult:
    """Run one grid cell.

    Sequence i of every cell uses the same oracle and streams, so cells that
    differ in one knob share their randomness (common random numbers).
    """
    cfg, partition = _setup(cell, cell.delta)
    null_cfg = cfg.with_(delta=0.0)
    p_values = np.empty(cell.count)
    nll = []
    for i in range(cell.count):
        tokens, logp = _generate(cell, cfg, partition, i, "wm")
        nll.append(-logp.mean())
        if cell.epsilon > 0:
            tokens = random_token_attack(tokens, cell.epsilon, cell.vocab_size,
                                         rng_stream(cell.seed, f"attack/{i}"))
        p_values[i] = _score(cell, tokens, cfg, partition)
    null_p = np.empty(cell.null_count)
    for i in range(cell.null_count):
        tokens, _ = _generate(cell, null_cfg, partition, cell.count + i, "null")
        null_p[i] = _score(cell, tokens, cfg, partition)
    res = CellResult(cell, p_values, null_p, float(np.mean(nll)) if nll else float("nan"))
    for f in cell.fprs:
        res.tpr[f] = float(np.mean(p_values <= f)) if cell.count else float("nan")
        res.empirical_fpr[f] = float(np.mean(null_p <= f)) if cell.null_count else float("nan")
    return res


def _run_record(cell: BenchCell) -> dict:
    return run_cell(cell).record()


def _as_list(value, cast):
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    return [cast(v) for v in str(value).split(",") if v.strip()]


def grid_from_kv(kv: dict) -> list[BenchCell]:
    """Expand a bench config (flat key=value; list values comma-separated) into cells."""
    known = {"seed", "scheme", "delta", "m", "a11", "epsilon", "n", "count", "null_count",
             "vocab_size", "oracle", "entropy", "order", "rounds", "max_token_steps"}
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown bench keys: {', '.join(sorted(unknown))}")
    schemes = _as_list(kv.get("scheme", PATTERNMARK), str)
    deltas = _as_list(kv.get("delta", "0.5,1.0,1.5,2.0,4.0"), float)
    ms = _as_list(kv.get("m", "5"), int)
    a11s = _as_list(kv.get("a11", "0"), float)
    epsilons = _as_list(kv.get("epsilon", "0"), float)
    ns = _as_list(kv.get("n", "400"), int)
    common = dict(
        count=int(kv.get("count", 200)),
        null_count=int(kv.get("null_count", 200)),
        vocab_size=int(kv.get("vocab_size", 20)),
        oracle=str(kv.get("oracle", "iid")),
        entropy=float(kv.get("entropy", 0.5)),
        order=str(kv.get("order", "ltr")),
        rounds=int(kv.get("rounds", 1)),
        seed=str(kv.get("seed", "bench")),
    )
    cells = []
    for scheme in schemes:
        if scheme == GREENLIST:
            # m and a11 do not apply to the fixed-list baseline
            for d, eps, n in itertools.product(deltas, epsilons, ns):
                cells.append(BenchCell(scheme, d, None, None, eps, n, **common))
        elif scheme == PATTERNMARK:
            for d, m, a11, eps, n in itertools.product(deltas, ms, a11s, epsilons, ns):
                cells.append(BenchCell(scheme, d, m, a11, eps, n, **common))
        else:
            raise ConfigError(f"unknown scheme {scheme!r}")
    return cells


def load_done(out_path) -> set[str]:
    path = Path(out_path)
    if not path.exists():
        return set()
    done = set()
    for line in path.read_text().splitlines():
        line = line.strip()
        if line:
            done.add(json.loads(line)["cell"])
    return done


def run_bench(cells: list[BenchCell], out_path, workers: int = 1,
              max_token_steps: int = DEFAULT_MAX_TOKEN_STEPS) -> list[dict]:
    """Run every cell not already in ``out_path``, appending one JSON line per cell.

    Raises ConfigError with a sizing estimate when the grid is too large.
    """
    done = load_done(out_path)
    todo = [c for c in cells if c.digest not in done]
    steps = sum(c.token_steps() for c in todo)
    if steps > max_token_steps:
        raise ConfigError(
            f"grid needs about {steps:,} token-sampling steps over {len(todo)} cells, "
            f"above the limit of {max_token_steps:,}; shrink the grid or raise max_token_steps"
        )
    log.info("%d cells (%d already done), ~%d token steps", len(todo), len(cells) - len(todo), steps)
    records = []
    with open(out_path, "a") as fh:
        if workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_run_record, todo)
                for rec in results:
                    fh.write(json.dumps(rec) + "\n")
                    fh.flush()
                    records.append(rec)
        else:
            for cell in todo:
                rec = _run_record(cell)
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
                records.append(rec)
    return records
