"""Command-line interface.

Candidates and vote indices are 1-based in all input and output. Exit codes:
0 on success, 1 on a domain error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from importlib import resources
from typing import Iterator, TextIO

from .basis import count_formula, enumerate_basis_moves, minimal_basis_counts
from .connector import connect
from .errors import BirkhoffError, TooLargeError
from .fiber import class_size_table, enumerate_fiber, low_degree_components
from .model import (
    Config,
    SuffStat,
    config_matrix,
    enumerate_votes,
    format_dataset,
    format_vote,
    parse_dataset,
    suff_stat,
)
from .sampler import ChainConfig, ChiSquare, Walk, estimate_pvalue, fit_mle, iter_chain

MAX_N = 24


class UsageError(Exception):
    pass


def load_tables() -> dict:
    text = resources.files("birkhoff").joinpath("data/tables.json").read_text(encoding="utf-8")
    return json.loads(text)


@contextmanager
def output(path: str | None) -> Iterator[TextIO]:
    """Standard output, or a temp file renamed over ``path`` only on success."""
    if path is None:
        yield sys.stdout
        return
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _config(args) -> Config:
    if args.n < 1 or args.n > MAX_N:
        raise UsageError(f"--n must be in 1..{MAX_N}")
    if not 1 <= args.r <= args.n:
        raise UsageError("--r must satisfy 1 <= r <= n")
    return Config(args.n, args.r)


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _dataset(path: str, n: int | None = None):
    return parse_dataset(_read(path), n)


# ---------------------------------------------------------------------------
# commands


def cmd_votes(args, out: TextIO) -> int:
    for v in enumerate_votes(_config(args)):
        out.write(format_vote(v) + "\n")
    return 0


def cmd_matrix(args, out: TextIO) -> int:
    A = config_matrix(_config(args))
    for row in A:
        out.write(" ".join(str(int(x)) for x in row) + "\n")
    return 0


def cmd_stat(args, out: TextIO) -> int:
    out.write(suff_stat(_dataset(args.data, args.n)).to_json() + "\n")
    return 0


def cmd_fiber(args, out: TextIO) -> int:
    if args.stat:
        stat = SuffStat.from_json(_read(args.stat))
    elif args.data:
        stat = suff_stat(_dataset(args.data, args.n))
    else:
        raise UsageError("fiber needs --stat or --data")
    fiber = enumerate_fiber(stat)
    for el in fiber:
        out.write(" ".join(f"{format_vote(v)}:{c}" for v, c in sorted(el.counts().items())) + "\n")
    bound = args.graph_degree if args.graph_degree else max(stat.N - 1, 1)
    comps = low_degree_components(fiber, bound)
    summary = {"size": len(fiber), "move_degree_bound": bound, "components": len(comps),
               "component_sizes": sorted(len(c) for c in comps)}
    out.write(json.dumps(summary) + "\n")
    return 0


def cmd_basis(args, out: TextIO) -> int:
    config = _config(args)
    if args.max_degree not in (2, 3):
        raise UsageError("--max-degree must be 2 or 3")
    moves = enumerate_basis_moves(config.n, config.r, args.max_degree)
    for m in sorted(moves, key=lambda m: (m.degree, m.z)):
        out.write(str(m) + "\n")
    return 0


def cmd_count(args, out: TextIO) -> int:
    config = _config(args)
    if args.brute:
        value = minimal_basis_counts(config.n, config.r, args.degree)
    else:
        value = count_formula(config.r, args.degree)(config.n)
    out.write(f"{value}\n")
    return 0


def _brute_row(job: tuple[int, int, int]):
    n, r, degree = job
    try:
        return minimal_basis_counts(n, r, degree)
    except TooLargeError:
        return None


def _combinations(n: int, r: int, degree: int) -> int:
    votes = math.perm(n, r) if r <= n else 0
    return math.comb(votes + degree - 1, degree)


def cmd_verify_tables(args, out: TextIO) -> int:
    tables = load_tables()
    if args.max_n < 1 or args.max_n > 10:
        raise UsageError("--max-n must be in 1..10")
    rs = args.r or [2, 3, 4, 5]
    if any(r not in (2, 3, 4, 5) for r in rs):
        raise UsageError("--r values must be in 2..5")
    degrees = [args.degree] if args.degree else [2, 3]
    jobs = [(n, r, d) for d in degrees for r in rs for n in range(1, args.max_n + 1)]
    brute: dict = {}
    if args.mode in ("brute", "both"):
        feasible = [j for j in jobs if _combinations(*j) <= args.brute_limit]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                brute = dict(zip(feasible, pool.map(_brute_row, feasible)))
        else:
            brute = {j: _brute_row(j) for j in feasible}
    failed = False
    out.write("degree\tr\tn\ttable\tformula\tbrute\tresult\n")
    for n, r, d in jobs:
        table = tables[f"degree{d}"]["counts"][str(r)][n - 1]
        formula = count_formula(r, d)(n) if args.mode in ("formula", "both") else None
        b = brute.get((n, r, d), None)
        checks = [v == table for v in (formula, b) if v is not None]
        if not checks:
            result = "SKIPPED"
        else:
            result = "PASS" if all(checks) else "FAIL"
        failed |= result == "FAIL"
        shown = ["-" if v is None else str(v) for v in (formula, b)]
        out.write(f"{d}\t{r}\t{n}\t{table}\t{shown[0]}\t{shown[1]}\t{result}\n")
    if args.class_sizes:
        rows = {tuple(row[:3]): row[3] for row in tables["class_sizes"]["rows"]}
        for r in sorted({r for r in rs if r <= args.class_sizes} | set(range(1, args.class_sizes + 1))):
            got = {(a, b, c): s for a, b, c, s in class_size_table(r)}
            for key in sorted(k for k in rows if k[0] == r):
                ok = got.get(key) == rows[key]
                failed |= not ok
                out.write(f"class\t{key[0]}\t{key[1]},{key[2]}\t{rows[key]}\t-\t{got.get(key, 0)}\t"
                          f"{'PASS' if ok else 'FAIL'}\n")
    return 1 if failed else 0


def cmd_connect(args, out: TextIO) -> int:
    n = args.n or max(_dataset(f).config.n for f in (args.source, args.target))
    P, Q = _dataset(args.source, n), _dataset(args.target, n)
    path = connect(P, Q)
    out.write(path.to_json() + "\n")
    return 0


def _chain_config(args, walk: Walk) -> ChainConfig:
    if args.steps < 1:
        raise UsageError("--steps must be positive")
    thin = args.emit_every if getattr(args, "emit_every", None) else args.thin
    try:
        return ChainConfig(args.steps, args.burn_in, thin, args.seed, walk)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_sample(args, out: TextIO) -> int:
    D = _dataset(args.data, args.n)
    config = _chain_config(args, Walk(args.walk))
    for step, d in iter_chain(D, config):
        out.write(f"# step={step}\n" + format_dataset(d, header=True) + "\n")
    return 0


def cmd_test(args, out: TextIO) -> int:
    D = _dataset(args.data, args.n)
    config = _chain_config(args, Walk.PROPER_MOVES)
    stat = ChiSquare(fit_mle(D), D.config)
    p, se = estimate_pvalue(D, stat, config)
    out.write(json.dumps({"p": p, "se": se, "statistic_observed": stat(D)}) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="birkhoff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, nr: bool = False, n_opt: bool = False) -> None:
        if nr:
            p.add_argument("--n", type=int, required=True, help="number of candidates")
            p.add_argument("--r", type=int, required=True, help="ranked positions per vote")
        elif n_opt:
            p.add_argument("--n", type=int, default=None, help="number of candidates (default: from file)")
        p.add_argument("--out", default=None, help="write output to this file")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("votes", help="list S_{n,r} in lexicographic order")
    common(p, nr=True)
    p.set_defaults(func=cmd_votes)

    p = sub.add_parser("matrix", help="print the configuration matrix")
    common(p, nr=True)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("stat", help="sufficient statistic of a dataset as JSON")
    common(p, n_opt=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_stat)

    p = sub.add_parser("fiber", help="enumerate a fiber and summarize its move graph")
    common(p, n_opt=True)
    p.add_argument("--stat", default=None, help="statistic JSON file")
    p.add_argument("--data", default=None, help="dataset file (its statistic is used)")
    p.add_argument("--graph-degree", type=int, choices=(2, 3), default=None)
    p.set_defaults(func=cmd_fiber)

    p = sub.add_parser("basis", help="moves of a Markov basis, one per line")
    common(p, nr=True)
    p.add_argument("--max-degree", type=int, default=3)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("count", help="number of minimal-basis moves of one degree")
    common(p, nr=True)
    p.add_argument("--degree", type=int, choices=(2, 3), required=True)
    how = p.add_mutually_exclusive_group()
    how.add_argument("--formula", action="store_true", help="closed form (default)")
    how.add_argument("--brute", action="store_true", help="enumerate fibers")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("verify-tables", help="compare embedded move-count tables with formula and brute force")
    common(p)
    p.add_argument("--r", type=int, action="append", help="repeatable; default 2..5")
    p.add_argument("--max-n", type=int, default=10)
    p.add_argument("--degree", type=int, choices=(2, 3), default=None)
    p.add_argument("--mode", choices=("formula", "brute", "both"), default="both")
    p.add_argument("--brute-limit", type=int, default=300_000,
                   help="brute-force rows with at most this many vote multisets")
    p.add_argument("--class-sizes", type=int, default=0, metavar="R",
                   help="also check three-vote class sizes for r <= R")
    p.set_defaults(func=cmd_verify_tables)

    p = sub.add_parser("connect", help="degree <= 3 path between two datasets of one fiber")
    common(p, n_opt=True)
    p.add_argument("source")
    p.add_argument("target")
    p.set_defaults(func=cmd_connect)

    for name, func, help_ in (("sample", cmd_sample, "stream datasets from a fiber walk"),
                              ("test", cmd_test, "conditional chi-square test")):
        p = sub.add_parser(name, help=help_)
        common(p, n_opt=True)
        p.add_argument("--data", required=True)
        p.add_argument("--steps", type=int, required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--burn-in", type=int, default=0)
        p.add_argument("--thin", type=int, default=1)
        if name == "sample":
            p.add_argument("--walk", choices=("proper", "extended"), default="proper")
            p.add_argument("--emit-every", type=int, default=None)
        p.set_defaults(func=func)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with output(args.out) as out:
            return args.func(args, out)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return 2
    except (BirkhoffError, ValueError, OSError, OverflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
