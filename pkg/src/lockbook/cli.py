"""Command line entry point: ``lockbook run|compare|validate|metrics``.

Exit codes: 0 success, 1 usage error, 2 invalid configuration, 3 runtime
failure. Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .config import ConfigInvalid, load_config, read_document
from .experiment import compare_regimes
from .metrics import compute_metrics
from .outputs import (
    IoFailure,
    read_quote_log,
    read_snapshots,
    read_trades,
    write_metrics,
    write_run,
    write_table,
)
from .sim import run_scenario

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seeds(text: str) -> List[int]:
    """``1,2,5`` or ``1-20`` or a mix."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lockbook", description="Order-book and locked-share market simulator")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", help="run one scenario and write its outputs")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override the config's master seed")
    r.add_argument("--out", required=True, help="output directory")

    c = sub.add_parser("compare", help="paired base vs override runs over seeds")
    c.add_argument("config")
    c.add_argument("overrides", help="YAML/JSON file with regime/lock/session overrides")
    c.add_argument("--seeds", required=True, help="e.g. 1-20 or 1,2,3")
    c.add_argument("--out", help="directory for compare.csv/.jsonl and signs.csv/.jsonl")

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("config")

    m = sub.add_parser("metrics", help="recompute metrics from a stored run directory")
    m.add_argument("run_dir")
    m.add_argument("--window", type=int, help="window in ms (default: from the run's config)")
    m.add_argument("--band", type=float)
    m.add_argument("--lag", type=int)
    m.add_argument("--out", help="directory for the recomputed metrics (default: stdout summary)")
    return p


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_scenario(cfg, args.seed)
    manifest = write_run(result, args.out)
    print(json.dumps({"manifest": str(manifest), "trades": len(result.trades)}))
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = load_config(args.config)
    overrides = read_document(args.overrides) or {}
    seeds = _seeds(args.seeds)
    if not seeds:
        raise UsageError("--seeds selects no seeds")
    summary = compare_regimes(cfg, overrides, seeds)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        table = summary.table()
        write_table(out, "compare", list(table[0]), table)
        write_table(out, "signs", ["metric", "positive", "negative", "zero_or_missing"],
                    summary.sign_counts())
    print(json.dumps({"seeds": len(seeds), "signs": summary.sign_counts()}))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps({"valid": True, "name": cfg.name, "config_sha256": cfg.digest(),
                      "agents": len(cfg.agent_specs())}))
    return EXIT_OK


def _cmd_metrics(args) -> int:
    run = Path(args.run_dir)
    cfg = load_config(run / "config.json")
    m = cfg.metrics
    horizon = cfg.simulation.horizon_days * cfg.session.day_length_ms
    series = compute_metrics(
        read_trades(run / "trades.jsonl"),
        read_snapshots(run / "snapshots.jsonl"),
        args.window or m.window_ms,
        m.band if args.band is None else args.band,
        args.lag or m.lag,
        quote_log=read_quote_log(run / "quotes.jsonl"),
        weights=m.index_weights,
        start=0,
        end=horizon,
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(out, series)
    print(json.dumps({"windows": len(series.rows)}))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "validate": _cmd_validate, "metrics": _cmd_metrics}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except ConfigInvalid as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (IoFailure, OSError) as exc:
        return _fail(EXIT_RUNTIME, "io", str(exc))
    except Exception as exc:  # noqa: BLE001 - every failure must map to an exit code
        return _fail(EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
