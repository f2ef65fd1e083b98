"""Command-line backtests: ingest traces, run strategies, sweep controllers, check bounds.

Exit codes: 0 success, 1 a bound with met preconditions was violated,
2 usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds
from .amm import DomainError
from .market_data import (
    RAW_COLUMNS,
    TRACE_COLUMNS,
    Trace,
    TraceFormatError,
    aggregate,
    compute_stats,
    derive_trace,
    read_raw_csv,
    read_trace,
    sniff_header,
    write_trace,
)
from .report import canonical_json
from .reward import PoolParams, format_controller, parse_controller, reward_matrix
from .strategies import EwaParams, default_params, run_ewa_on_rewards, run_static, theorem_eta
from .synthetic import compliant_trace

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    strategy: str
    total_reward: float
    reward_series: np.ndarray
    controllers: list[float] = field(default_factory=list)
    eta: float | None = None
    bounds: list | None = None

    @property
    def wealth_multiple(self) -> float:
        # huge totals overflow a float; report them as infinite
        return math.exp(self.total_reward) if self.total_reward < 709.0 else math.inf

    def to_dict(self) -> dict:
        out = {"strategy": self.strategy, "steps": int(len(self.reward_series))}
        if self.controllers:
            out["controllers"] = [format_controller(n) for n in self.controllers]
        if self.eta is not None:
            out["eta"] = self.eta
        out["total_reward"] = self.total_reward
        out["wealth_multiple"] = self.wealth_multiple
        out["reward_series"] = [float(x) for x in self.reward_series]
        if self.bounds is not None:
            out["bounds"] = [b.to_dict() for b in self.bounds]
        return out


# -- input handling ---------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise UsageError("controller grid is empty")
    grid = []
    for item in items:
        try:
            n = parse_controller(item)
        except (ValueError, DomainError):
            raise UsageError(f"bad controller {item!r}; use positive integers or 'inf'") from None
        if not (math.isinf(n) or n.is_integer()):
            raise UsageError(f"controller {item!r} must be an integer or 'inf'")
        grid.append(n)
    return sorted(set(grid))


def load_pool(args, fallback: PoolParams | None = None) -> PoolParams:
    d = gamma = None
    if fallback is not None:
        d, gamma = fallback.d, fallback.gamma
    if args.pool:
        try:
            cfg = json.loads(Path(args.pool).read_text(encoding="utf-8"))
            d, gamma = float(cfg["d"]), float(cfg["gamma"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read pool config {args.pool}: {exc}") from None
    if args.d is not None:
        d = args.d
    if args.gamma is not None:
        gamma = args.gamma
    if d is None or gamma is None:
        raise UsageError("pool parameters missing; pass --pool or --d and --gamma")
    try:
        return PoolParams(d, gamma)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def load_trace(args) -> tuple[Trace, PoolParams]:
    """Read ``--input`` as either a raw sample CSV or a canonical ``rho,u`` trace."""
    path = Path(args.input)
    try:
        header = sniff_header(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    if header == TRACE_COLUMNS:
        trace, side_pool = read_trace(path)
        return trace, load_pool(args, side_pool)
    if sorted(header) != sorted(RAW_COLUMNS):
        raise TraceFormatError(
            f"unrecognised header; expected {','.join(RAW_COLUMNS)} or {','.join(TRACE_COLUMNS)}", 1
        )
    pool = load_pool(args)
    samples = read_raw_csv(path)
    buckets = aggregate(samples, args.step_seconds)
    if len(buckets) < 2:
        raise TraceFormatError("input spans a single time step; need at least two buckets")
    return derive_trace(buckets, pool), pool


def parse_strategy(spec: str, horizon: int) -> tuple[str, list[float], float | None]:
    """Parse ``static:<n|inf>`` or ``ewa:<eta|auto>[:grid]``."""
    kind, _, rest = spec.partition(":")
    if kind == "static":
        grid = parse_grid(rest)
        if len(grid) != 1:
            raise UsageError("static strategy takes exactly one controller")
        return "static", grid, None
    if kind == "ewa":
        eta_text, _, grid_text = rest.partition(":")
        return ("ewa", *_ewa_setup(eta_text or "auto", grid_text or None, horizon))
    raise UsageError(f"unknown strategy {spec!r}; use static:<n|inf> or ewa:<eta|auto>[:grid]")


def _ewa_setup(eta_text: str, grid_text: str | None, horizon: int) -> tuple[list[float], float]:
    grid = parse_grid(grid_text) if grid_text else None
    if eta_text == "auto":
        if grid is None:
            return None, None  # filled by default_params once the pool is known
        if len(grid) < 2:
            raise UsageError("eta 'auto' needs at least two controllers")
        return grid, theorem_eta(len(grid), horizon)
    try:
        eta = float(eta_text)
    except ValueError:
        raise UsageError(f"bad learning rate {eta_text!r}") from None
    if not (eta > 0 and math.isfinite(eta)):
        raise UsageError(f"learning rate must be positive, got {eta_text!r}")
    return grid, eta


def _ewa_params(grid, eta, horizon: int, pool: PoolParams) -> EwaParams:
    if grid is None:
        defaults = default_params(horizon, pool)
        return defaults if eta is None else EwaParams(defaults.num_controllers, eta)
    return EwaParams.for_grid(grid, eta)


# -- commands ---------------------------------------------------------------


def cmd_stats(args) -> int:
    trace, pool = load_trace(args)
    print(canonical_json(compute_stats(trace, pool).to_dict()))
    return EXIT_OK


def cmd_ingest(args) -> int:
    trace, pool = load_trace(args)
    side = write_trace(args.out, trace, pool)
    print(canonical_json({"trace": str(args.out), "sidecar": str(side), "T": trace.T}))
    return EXIT_OK


def cmd_synth(args) -> int:
    pool = load_pool(args)
    rng = np.random.default_rng(args.seed)
    try:
        trace = compliant_trace(rng, args.steps, pool, args.max_price_factor, args.volume_floor_a)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_trace(args.out, trace, pool)
    print(canonical_json(compute_stats(trace, pool).to_dict()))
    return EXIT_OK


def build_run_report(trace: Trace, pool: PoolParams, spec: str) -> RunReport:
    kind, grid, eta = parse_strategy(spec, trace.T)
    if kind == "static":
        run = run_static(trace, pool, grid[0])
        return RunReport(f"static:{format_controller(grid[0])}", run.total, run.reward_series)
    params = _ewa_params(grid, eta, trace.T, pool)
    run = run_ewa_on_rewards(reward_matrix(params.controllers, trace, pool), params)
    return RunReport(spec, run.wealth_log, run.reward_series, list(params.controllers), params.eta)


def write_series(path, series: np.ndarray) -> None:
    cumulative = np.cumsum(series)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "reward", "cumulative"])
        for t, (r, c) in enumerate(zip(series, cumulative), start=1):
            writer.writerow([t, repr(float(r)), repr(float(c))])


def cmd_run(args) -> int:
    trace, pool = load_trace(args)
    report = build_run_report(trace, pool, args.strategy)
    if args.bounds:
        report.bounds = bounds.check_all(trace, pool)
    if args.series_out:
        write_series(args.series_out, report.reward_series)
    print(canonical_json(report))
    return EXIT_OK


def sweep_rows(trace: Trace, pool: PoolParams, grid: list[float], eta: str | None) -> list[tuple[str, float]]:
    table = reward_matrix(grid, trace, pool)
    # per-column 1-D sums match the summation order of a single static run
    totals = [np.sum(np.ascontiguousarray(table[:, j])) for j in range(table.shape[1])]
    rows = [(format_controller(n), float(total)) for n, total in zip(grid, totals)]
    if eta is not None:
        _, eta_value = _ewa_setup(eta, ",".join(format_controller(n) for n in grid), trace.T)
        run = run_ewa_on_rewards(table, EwaParams.for_grid(grid, eta_value))
        rows.append(("ewa", run.wealth_log))
    return rows


def cmd_sweep(args) -> int:
    trace, pool = load_trace(args)
    grid = parse_grid(args.grid)
    rows = sweep_rows(trace, pool, grid, args.eta)
    if args.json:
        print(canonical_json([{"n": n, "total_reward": total} for n, total in rows]))
        return EXIT_OK
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "total_reward"])
    for n, total in rows:
        writer.writerow([n, repr(total)])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_check_bounds(args) -> int:
    trace, pool = load_trace(args)
    lemma2 = None
    if args.grid:
        lemma2 = [n for n in parse_grid(args.grid) if math.isfinite(n)]
    reports = bounds.check_all(trace, pool, lemma2, a=args.a)
    print(canonical_json(reports))
    if any(r.violated for r in reports):
        names = ", ".join(r.bound_name for r in reports if r.violated)
        print(f"error: bound violated with preconditions met: {names}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, needs_input: bool = True) -> None:
    if needs_input:
        p.add_argument("--input", required=True, help="raw timestamp,price,volume,liquidity CSV or a rho,u trace")
        p.add_argument("--step-seconds", type=int, default=3600, help="aggregation step for raw input (default 3600)")
    p.add_argument("--pool", help='pool JSON, e.g. {"d": 1.0001, "gamma": 0.0001}')
    p.add_argument("--d", type=float, help="interval size; overrides --pool")
    p.add_argument("--gamma", type=float, help="fee tier; overrides --pool")
    p.add_argument("--json", action="store_true", help="emit JSON where CSV is the default")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v3olp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="summary statistics of a trace")
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("ingest", help="convert raw samples into a canonical rho,u trace")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write a random trace meeting the bound preconditions")
    _add_common(p, needs_input=False)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-price-factor", type=float, default=2.0)
    p.add_argument("--volume-floor-a", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run one strategy")
    _add_common(p)
    p.add_argument("--strategy", required=True, help="static:<n|inf> or ewa:<eta|auto>[:grid]")
    p.add_argument("--series-out", help="write t,reward,cumulative CSV here")
    p.add_argument("--bounds", action="store_true", help="attach bound reports")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="total reward of static controllers over a grid")
    _add_common(p)
    p.add_argument("--grid", required=True, help="comma list of controllers, 'inf' allowed")
    p.add_argument("--eta", help="also run EWA over the grid with this learning rate (or 'auto')")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-bounds", help="evaluate every reward bound on a trace")
    _add_common(p)
    p.add_argument("--grid", help="controllers for the finite static bound (default powers of two)")
    p.add_argument("--a", type=float, default=10.0, help="volume-floor multiplier for the 4P bound")
    p.set_defaults(func=cmd_check_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
