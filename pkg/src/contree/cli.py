"""Command-line interface: consensus computation, instance generation, and
a CSV benchmark harness.

Exit codes for ``consensus``: 0 success, 2 malformed Newick input (line and
column reported), 3 leaf-set mismatch between input trees, 4 oracle
cross-check mismatch.  Results go to stdout (or ``-o``); diagnostics go to
stderr.
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
import time
from dataclasses import dataclass

from . import gen
from .freq_diff import frequency_difference_consensus
from .majority_plus import majority_plus_consensus
from .oracle import oracle_tree
from .phylo_core import (
    ConsensusError,
    LeafSetMismatchError,
    NewickError,
    Profile,
    load_profile,
    trees_isomorphic,
    write_newick,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_LEAFSET = 3
EXIT_ORACLE = 4

_METHODS = ("majority-plus", "freqdiff", "majority-oracle", "strict-oracle")


@dataclass
class RunConfig:
    method: str
    input: str
    output: str | None = None
    filter_impl: str = "fast"
    weights_method: str = "auto"
    oracle_check: bool = False
    seed: int = 0
    grid: list[tuple[int, int]] | None = None
    reps: int = 5
    contract_prob: float = gen.DEFAULT_CONTRACT_PROB


def _compute(profile: Profile, cfg: RunConfig):
    if cfg.method == "majority-plus":
        return majority_plus_consensus(profile)
    if cfg.method == "freqdiff":
        return frequency_difference_consensus(profile, cfg.filter_impl, cfg.weights_method)
    if cfg.method == "majority-oracle":
        return oracle_tree(profile, "majority")
    if cfg.method == "strict-oracle":
        return oracle_tree(profile, "strict")
    raise ValueError(f"unknown method: {cfg.method}")


def _oracle_counterpart(profile: Profile, method: str):
    return {
        "majority-plus": lambda: oracle_tree(profile, "majority-plus"),
        "freqdiff": lambda: oracle_tree(profile, "freqdiff"),
        "majority-oracle": lambda: oracle_tree(profile, "majority"),
        "strict-oracle": lambda: oracle_tree(profile, "strict"),
    }[method]()


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_consensus(cfg: RunConfig) -> int:
    try:
        profile = load_profile(cfg.input)
    except NewickError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except LeafSetMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LEAFSET
    except (OSError, ConsensusError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    result = _compute(profile, cfg)
    if cfg.oracle_check:
        reference = _oracle_counterpart(profile, cfg.method)
        if not trees_isomorphic(result, reference):
            print("error: result disagrees with the brute-force oracle", file=sys.stderr)
            return EXIT_ORACLE
    _emit(write_newick(result) + "\n", cfg.output)
    return EXIT_OK


def cmd_gen(cfg: RunConfig, k: int, n: int) -> int:
    profile = gen.random_profile(k, n, cfg.seed, cfg.contract_prob)
    lines = "".join(write_newick(t) + "\n" for t in profile.trees)
    _emit(lines, cfg.output)
    return EXIT_OK


def _time_once(method_fn) -> float:
    start = time.monotonic()
    method_fn()
    return time.monotonic() - start


def cmd_bench(cfg: RunConfig) -> int:
    out = sys.stdout if not cfg.output else open(cfg.output, "w", encoding="utf-8", newline="")
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["method", "k", "n", "median_seconds", "reps"])
        for k, n in cfg.grid or []:
            profile = gen.random_profile(k, n, cfg.seed, cfg.contract_prob)
            times = [_time_once(lambda: _compute(profile, cfg)) for _ in range(cfg.reps)]
            writer.writerow([cfg.method, k, n, f"{statistics.median(times):.6f}", cfg.reps])
            out.flush()
    finally:
        if cfg.output:
            out.close()
    return EXIT_OK


def _parse_grid(text: str) -> list[tuple[int, int]]:
    grid = []
    if not text.strip():
        return grid
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        k_str, n_str = part.split(",")
        grid.append((int(k_str), int(n_str)))
    return grid


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contree",
                                description="Consensus trees for identically leaf-labeled tree sets.")
    sub = p.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("consensus", help="compute a consensus tree")
    pc.add_argument("-i", "--input", required=True, help="Newick file, one tree per line")
    pc.add_argument("-o", "--output", default=None)
    pc.add_argument("--method", choices=_METHODS, default="majority-plus")
    pc.add_argument("--filter-impl", choices=("naive", "fast"), default=None)
    pc.add_argument("--weights-method", choices=("bitvec", "day", "auto"), default=None)
    pc.add_argument("--oracle-check", action="store_true")

    pg = sub.add_parser("gen", help="generate a random tree set")
    pg.add_argument("-o", "--output", default=None)
    pg.add_argument("-k", type=int, required=True, help="number of trees")
    pg.add_argument("-n", type=int, required=True, help="number of leaves")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--contract-prob", type=float, default=gen.DEFAULT_CONTRACT_PROB,
                    help="per-edge contraction probability")

    pb = sub.add_parser("bench", help="time methods over a (k, n) grid, CSV out")
    pb.add_argument("-o", "--output", default=None)
    pb.add_argument("--method", choices=_METHODS, default="majority-plus")
    pb.add_argument("--filter-impl", choices=("naive", "fast"), default=None)
    pb.add_argument("--weights-method", choices=("bitvec", "day", "auto"), default=None)
    pb.add_argument("--grid", required=True, help='semicolon list of "k,n" pairs')
    pb.add_argument("--reps", type=int, default=5)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--contract-prob", type=float, default=gen.DEFAULT_CONTRACT_PROB)
    return p


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(method=getattr(args, "method", "majority-plus"),
                    input=getattr(args, "input", ""),
                    output=getattr(args, "output", None),
                    seed=getattr(args, "seed", 0))
    filter_impl = getattr(args, "filter_impl", None)
    weights_method = getattr(args, "weights_method", None)
    if cfg.method != "freqdiff" and (filter_impl or weights_method):
        raise SystemExit("--filter-impl/--weights-method only apply to --method freqdiff")
    cfg.filter_impl = filter_impl or "fast"
    cfg.weights_method = weights_method or "auto"
    cfg.oracle_check = getattr(args, "oracle_check", False)
    if hasattr(args, "grid"):
        cfg.grid = _parse_grid(args.grid)
        cfg.reps = args.reps
    if hasattr(args, "contract_prob"):
        cfg.contract_prob = args.contract_prob
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config_from_args(args)
    if args.command == "consensus":
        return cmd_consensus(cfg)
    if args.command == "gen":
        return cmd_gen(cfg, args.k, args.n)
    return cmd_bench(cfg)


if __name__ == "__main__":
    sys.exit(main())
