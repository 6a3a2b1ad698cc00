"""Command-line entry point: run, report, replay, discover, universe."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import timedelta
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

from .config import ConfigError, load_config
from .discovery import DiscoveryError, DiscoveryQuery, QualityFilter, QueryKind, discover
from .eventlog import EventKind, LogFormatError, read_log
from .markets import Category, load_universe, save_universe, step_quotes, synthetic_universe
from .orchestrator import run_arena
from .replay import ReplayError, replay
from .reports import WIN_RATE_FILTERS, ReportBundle, build_bundle
from .units import ONE_DOLLAR, SHARE

OUT_DIR_ENV = "PMHARNESS_OUT_DIR"
DEFAULT_OUT_DIR = "runs"

logger = logging.getLogger("pmharness")


class CliError(Exception):
    pass


def _default_out_dir(config_path: Path) -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, DEFAULT_OUT_DIR)) / config_path.stem


def _write_reports(bundle: ReportBundle, out_dir: Path) -> None:
    (out_dir / "leaderboard.csv").write_text(bundle.leaderboard_csv(), encoding="utf-8")
    (out_dir / "categories.csv").write_text(bundle.category_csv(), encoding="utf-8")
    (out_dir / "exits.csv").write_text(bundle.exit_csv(), encoding="utf-8")
    (out_dir / "report.json").write_text(
        json.dumps(bundle.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_run(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    if not config_path.is_file():
        raise CliError(f"config file not found: {config_path}")
    config = load_config(config_path)
    out_dir = Path(args.out) if args.out else _default_out_dir(config_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "events.jsonl"
    run_arena(config, log_path)
    bundle = build_bundle(replay(log_path), args.win_rate)
    _write_reports(bundle, out_dir)
    sys.stdout.write(bundle.leaderboard_csv())
    logger.info("wrote %s", out_dir)
    return 0


def _check_log(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"log file not found: {p}")
    return p


def cmd_report(args: argparse.Namespace) -> int:
    bundle = build_bundle(replay(_check_log(args.log)), args.win_rate)
    if args.format == "json":
        sys.stdout.write(json.dumps(bundle.to_dict(), indent=2, sort_keys=True) + "\n")
    else:
        table = {"leaderboard": bundle.leaderboard_csv, "category": bundle.category_csv,
                 "exit": bundle.exit_csv}[args.table]
        sys.stdout.write(table())
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    records = read_log(_check_log(args.log))
    if args.recompute:
        records = [r for r in records if r.kind is not EventKind.SNAPSHOT]
    result = replay(records)
    sys.stdout.write(json.dumps(result.summary()["reports"], indent=2, sort_keys=True) + "\n")
    return 0


def _shares(text: str) -> int:
    try:
        return int(Decimal(text) * SHARE)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from None


def _dollars(text: str) -> int:
    try:
        return int(Decimal(text) * ONE_DOLLAR)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from None


def cmd_discover(args: argparse.Namespace) -> int:
    path = Path(args.universe)
    if not path.is_file():
        raise CliError(f"universe file not found: {path}")
    universe = load_universe(path)
    quotes = dict(universe.initial_quotes)
    history = {mid: [q] for mid, q in quotes.items()}
    for k in range(1, args.cycle + 1):
        new = step_quotes(universe, quotes, k, universe.seed)
        for mid, q in new.items():
            if q is not quotes[mid]:
                history[mid].append(q)
        quotes = new
    query = DiscoveryQuery(
        kind=QueryKind(args.kind),
        keyword=args.keyword,
        tag=Category(args.tag) if args.tag else None,
        window=timedelta(minutes=args.window_minutes) if args.window_minutes else None,
        limit=args.limit,
    )
    quality = QualityFilter(args.min_liquidity, args.min_volume, args.min_price_move)
    ids = discover(universe.markets, history, query, quality, universe.config.cycle_time(args.cycle))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["Rank", "Market", "Category", "Volume", "Yes Bid", "Yes Ask", "Expiry", "Title"])
    for rank, mid in enumerate(ids, start=1):
        m, q = universe.by_id[mid], quotes[mid]
        w.writerow([rank, mid, m.category.value, q.volume / SHARE, q.yes_bid / ONE_DOLLAR,
                    q.yes_ask / ONE_DOLLAR, m.expiry.isoformat(), m.title])
    return 0


def cmd_universe(args: argparse.Namespace) -> int:
    universe = synthetic_universe(args.seed, args.markets, args.horizon)
    save_universe(universe, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmharness",
        description="Deterministic offline evaluation harness for prediction-market trading agents.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    wr = dict(choices=sorted(WIN_RATE_FILTERS), default="early_exit",
              help="which closed trades the leaderboard win-rate column counts")

    p = sub.add_parser("run", help="execute a run and write its log and reports")
    p.add_argument("config", help="run configuration (YAML)")
    p.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR}, "
                                 "plus the config file stem)")
    p.add_argument("--win-rate", **wr)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="print report tables for an event log")
    p.add_argument("log")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--table", choices=("leaderboard", "category", "exit"), default="leaderboard",
                   help="table to print in csv format")
    p.add_argument("--win-rate", **wr)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="rebuild metrics from an event log and print them")
    p.add_argument("log")
    p.add_argument("--recompute", action="store_true",
                   help="ignore logged snapshots and rebuild them from quotes and ledger deltas")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("discover", help="query a universe file")
    p.add_argument("universe")
    p.add_argument("--kind", required=True, choices=[k.value for k in QueryKind])
    p.add_argument("--keyword")
    p.add_argument("--tag", choices=[c.value for c in Category])
    p.add_argument("--window-minutes", type=int)
    p.add_argument("--limit", type=int, default=10)
    p.add_argument("--cycle", type=int, default=0, help="evaluate as of this cycle (quotes are walked forward)")
    p.add_argument("--min-liquidity", type=_shares, default=0, help="shares on the thinner side")
    p.add_argument("--min-volume", type=_shares, default=0, help="cumulative shares traded")
    p.add_argument("--min-price-move", type=_dollars, default=0, help="dollars of mid move")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("universe", help="generate a synthetic universe file")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--markets", type=int, default=20)
    p.add_argument("--horizon", type=int, default=100)
    p.set_defaults(func=cmd_universe)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, DiscoveryError, LogFormatError, ReplayError, OSError, ValueError) as exc:
        print(f"pmharness: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
