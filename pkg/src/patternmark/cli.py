"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or contract error.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from pathlib import Path

import numpy as np

from . import bench, formats
from .core import ALTERNATING, PatternMarkError, alternating_patterns, build_partition, rng_stream
from .detector import detect
from .keygen import generate_key_sequence
from .nulldist import PVALUE_FLOOR, null_distribution
from .sampler import generate_watermarked
from .sim import make_oracle, make_order, random_token_attack

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed_or_fresh(seed: str | None) -> str:
    if seed is not None:
        return seed
    seed = secrets.token_hex(16)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _load_config(args):
    kv = formats.read_kv(args.config) if args.config else {}
    if getattr(args, "seed", None) is not None:
        kv["seed"] = args.seed
    for flag, key in (("delta", "delta"), ("l", "l"), ("m", "m"), ("transition", "a11"), ("fpr", "fpr")):
        value = getattr(args, flag, None)
        if value is not None:
            kv[key] = str(value)
            if key == "a11":
                kv.pop("transition", None)
    if "seed" not in kv:
        kv["seed"] = _seed_or_fresh(None)
    return formats.config_from_kv(kv)


def _fmt_p(p: float) -> str:
    return f"< {PVALUE_FLOOR:g}" if p < PVALUE_FLOOR else f"{p:.6g}"


def cmd_partition(args):
    seed = _seed_or_fresh(args.seed)
    exclude = [int(t) for t in args.exclude.split(",")] if args.exclude else []
    part = build_partition(seed, args.N, args.l, exclude)
    formats.write_partition(args.out, part)
    print(f"wrote {args.out} (digest {part.digest})")


def cmd_generate(args):
    cfg = _load_config(args)
    seed = cfg.secret_seed.decode("utf-8", errors="surrogateescape")
    partition = build_partition(cfg.secret_seed, args.N, cfg.l)
    oracle_seed = args.oracle_seed if args.oracle_seed is not None else f"{seed}/oracle"
    oracle = make_oracle(args.oracle, args.N, args.entropy, oracle_seed)
    labels, seqs = [], []
    for i in range(args.count):
        lab = {k: f"{k}/{i}" for k in ("keygen", "sampling", "order")}
        order = make_order(args.order, args.n, args.rounds, rng_stream(cfg.secret_seed, lab["order"]))
        keys = generate_key_sequence(cfg, args.n, rng_stream(cfg.secret_seed, lab["keygen"]))
        seqs.append(generate_watermarked(oracle, order, cfg, partition, keys,
                                         rng_stream(cfg.secret_seed, lab["sampling"])))
        labels.append(lab)
    formats.write_sequences(args.out, seqs)
    sidecar = {
        "config_digest": cfg.digest(partition),
        "partition_digest": partition.digest,
        "watermark": "unwatermarked" if cfg.delta == 0 else "watermarked",
        "config": formats.config_to_kv(cfg),
        "oracle": {"kind": args.oracle, "vocab_size": args.N, "entropy": args.entropy, "seed": oracle_seed},
        "order": {"kind": args.order, "rounds": args.rounds},
        "n": args.n,
        "sequences": labels,
    }
    Path(str(args.out) + ".meta.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print(f"wrote {args.count} sequences to {args.out}")


def cmd_detect(args):
    cfg = _load_config(args)
    partition = formats.read_partition(args.partition)
    out = open(args.out, "w") if args.out else sys.stdout
    p_values = []
    try:
        if args.format == "text":
            print("index\tn\tcount\tp_value\twatermarked", file=out)
        for idx, (lineno, tokens) in enumerate(formats.iter_sequences(args.sequences)):
            try:
                rep = detect(tokens, cfg, partition)
            except PatternMarkError as e:
                raise PatternMarkError(f"{args.sequences}:{lineno}: {e}") from None
            p_values.append(rep.p_value)
            rec = {"index": idx, "n": rep.n, "count": rep.observed_count,
                   "p_value": rep.p_value, "watermarked": rep.watermarked}
            if args.format == "json":
                print(json.dumps(rec), file=out)
            else:
                print(f"{idx}\t{rep.n}\t{rep.observed_count}\t{_fmt_p(rep.p_value)}\t{rep.watermarked}", file=out)
        p = np.asarray(p_values)
        tpr = {repr(f): (float(np.mean(p <= f)) if p.size else None) for f in bench.FPR_GRID}
        summary = {"summary": {"sequences": int(p.size), "config_digest": cfg.digest(partition),
                               "fpr_threshold": cfg.fpr_threshold, "tpr": tpr}}
        if args.format == "json":
            print(json.dumps(summary), file=out)
        else:
            print(f"# sequences: {p.size}", file=out)
            for f in bench.FPR_GRID:
                v = tpr[repr(f)]
                print(f"# TPR@{f * 100:g}%: {'n/a' if v is None else f'{v:.4f}'}", file=out)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_pvalue_table(args):
    if args.pattern == ALTERNATING:
        if args.l != 2:
            raise UsageError("alternating patterns need --l 2")
        patterns = alternating_patterns(args.m)
    else:
        patterns = formats.parse_patterns(args.pattern)
    dist = null_distribution(args.l, args.n, args.m, patterns, method=args.method)
    tails = dist.tails()
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        if args.format == "json":
            for c, (mass, tail) in enumerate(zip(dist.mass, tails)):
                print(json.dumps({"c": c, "mass": float(mass), "tail": float(tail)}), file=out)
        else:
            print("c\tmass\ttail", file=out)
            for c, (mass, tail) in enumerate(zip(dist.mass, tails)):
                print(f"{c}\t{mass:.17g}\t{tail:.17g}", file=out)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_attack(args):
    seed = _seed_or_fresh(args.seed)
    out = []
    for idx, (lineno, tokens) in enumerate(formats.iter_sequences(args.sequences)):
        try:
            out.append(random_token_attack(tokens, args.epsilon, args.vocab_size,
                                           rng_stream(seed, f"attack/{idx}")))
        except PatternMarkError as e:
            raise PatternMarkError(f"{args.sequences}:{lineno}: {e}") from None
    formats.write_sequences(args.out, out)
    print(f"wrote {len(out)} sequences to {args.out}")


def cmd_bench(args):
    kv = formats.read_kv(args.config)
    max_steps = int(float(kv.pop("max_token_steps", bench.DEFAULT_MAX_TOKEN_STEPS)))
    if args.seed is not None:
        kv["seed"] = args.seed
    elif "seed" not in kv:
        kv["seed"] = _seed_or_fresh(None)
    cells = bench.grid_from_kv(kv)
    records = bench.run_bench(cells, args.out, workers=args.workers, max_token_steps=max_steps)
    print(f"{len(records)} new cells appended to {args.out} ({len(cells)} in grid)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="patternmark", description="Pattern-based watermarking for order-agnostic generators.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def wm_flags(sp):
        sp.add_argument("--config", help="flat key=value config file; flags override it")
        sp.add_argument("--seed", help="secret seed")
        sp.add_argument("--delta", type=float)
        sp.add_argument("--l", type=int)
        sp.add_argument("--m", type=int)
        sp.add_argument("--transition", type=float, metavar="A11",
                        help="use [[a11, 1-a11], [1-a11, a11]]")
        sp.add_argument("--fpr", type=float)

    sp = sub.add_parser("partition", help="write a vocabulary partition file")
    sp.add_argument("--seed")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--l", type=int, default=2)
    sp.add_argument("--exclude", help="comma-separated token ids never promoted or scored")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("generate", help="generate watermarked sequences from a synthetic oracle")
    wm_flags(sp)
    sp.add_argument("--N", type=int, default=20, help="vocabulary size")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--oracle", choices=["iid", "ctx"], default="iid")
    sp.add_argument("--entropy", type=float, default=0.5)
    sp.add_argument("--oracle-seed")
    sp.add_argument("--order", choices=["ltr", "perm", "maskpredict"], default="ltr")
    sp.add_argument("--rounds", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("detect", help="score a sequence file")
    wm_flags(sp)
    sp.add_argument("--partition", required=True)
    sp.add_argument("--sequences", required=True)
    sp.add_argument("--format", choices=["text", "json"], default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("pvalue-table", help="dump the null distribution and its tails")
    sp.add_argument("--l", type=int, default=2)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--pattern", default=ALTERNATING)
    sp.add_argument("--method", choices=["auto", "general", "alternating"], default="auto")
    sp.add_argument("--format", choices=["text", "json"], default="text")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_pvalue_table)

    sp = sub.add_parser("attack", help="random token modification attack")
    sp.add_argument("--sequences", required=True)
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--vocab-size", type=int, default=20)
    sp.add_argument("--seed")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("bench", help="run a benchmark grid")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as e:
        print(f"patternmark: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PatternMarkError, OSError) as e:
        print(f"patternmark: error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
