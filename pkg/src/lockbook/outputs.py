"""Writing and reading run outputs.

Every table is written both as CSV (header row first) and as JSON lines
(one object per record, keys in the documented column order). Nothing
time-of-day dependent is written, so equal runs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from .book import BookSnapshot, Level, QuoteEvent, Side, Trade
from .metrics import COLUMNS as METRIC_COLUMNS
from .metrics import SCHEMA as METRIC_SCHEMA
from .metrics import MetricsSeries, row_dict

RUN_SCHEMA = "run/1"

TRADE_FIELDS = ["seq", "day", "time", "price", "volume", "buyer", "seller", "aggressor",
                "maker_quote_id", "taker_order_id", "self_trade", "notional", "haircut", "locked_sold"]
QUOTE_FIELDS = ["time", "kind", "quote_id", "owner", "side", "price", "remaining", "expiry"]
SNAPSHOT_FIELDS = ["time", "bids", "asks"]
LEDGER_FIELDS = ["day", "owner", "issuer", "locked", "unlocked", "treasury"]
EVENT_FIELDS = ["time", "day", "kind", "detail"]
AGENT_FIELDS = ["id", "kind", "cash", "locked", "unlocked", "bought", "sold", "haircuts",
                "pnl", "mean_holding_ms", "rejected"]
UNLOCK_FIELDS = ["issuer", "day", "locked_before", "unlocked", "coin"]


class IoFailure(OSError):
    pass


def _plain(v: Any) -> Any:
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, Side):
        return v.value
    return v


def _cell(v: Any) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_table(out: Path, stem: str, fields: Sequence[str], rows: Iterable[dict],
                header: Optional[dict] = None) -> List[Path]:
    """Write ``stem.csv`` and ``stem.jsonl``; an optional header record goes first in both."""
    rows = list(rows)
    csv_path, jsonl_path = out / f"{stem}.csv", out / f"{stem}.jsonl"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(["#" + " ".join(f"{k}={v}" for k, v in header.items())])
        w.writerow(fields)
        for r in rows:
            w.writerow([_cell(r[f]) for f in fields])
    with open(jsonl_path, "w") as fh:
        if header is not None:
            fh.write(json.dumps(header) + "\n")
        for r in rows:
            fh.write(json.dumps({f: _plain(r[f]) for f in fields}) + "\n")
    return [csv_path, jsonl_path]


def _levels(levels: Sequence[Level]) -> str:
    return "|".join(f"{l.price}:{l.volume}" for l in levels)


def _parse_levels(text: str) -> tuple:
    if not text:
        return ()
    return tuple(Level(int(p), int(v)) for p, v in (x.split(":") for x in text.split("|")))


def snapshot_rows(snaps: Sequence[BookSnapshot]) -> List[dict]:
    return [{"time": s.time, "bids": _levels(s.bids), "asks": _levels(s.asks)} for s in snaps]


def metrics_header(series: MetricsSeries) -> dict:
    return {"schema": METRIC_SCHEMA, "window": series.window, "band": series.band, "lag": series.lag}


def write_metrics(out: Path, series: MetricsSeries, stem: str = "metrics") -> List[Path]:
    return write_table(out, stem, METRIC_COLUMNS, [row_dict(r) for r in series.rows],
                       header=metrics_header(series))


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run(result, out: str | Path) -> Path:
    """Persist a :class:`~lockbook.sim.RunResult`; returns the manifest path."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files: List[Path] = []
        files += write_table(out, "trades", TRADE_FIELDS, [t.__dict__ for t in result.trades])
        files += write_table(out, "quotes", QUOTE_FIELDS, [q.__dict__ for q in result.quote_log])
        files += write_table(out, "snapshots", SNAPSHOT_FIELDS, snapshot_rows(result.snapshots))
        files += write_table(out, "ledger", LEDGER_FIELDS, result.ledger)
        files += write_table(out, "events", EVENT_FIELDS, [e.__dict__ for e in result.events])
        files += write_table(out, "agents", AGENT_FIELDS, result.agents)
        files += write_table(out, "unlocks", UNLOCK_FIELDS,
                             [dict(zip(UNLOCK_FIELDS, u)) for u in result.unlock_log])
        files += write_metrics(out, result.metrics)
        summary = out / "summary.json"
        summary.write_text(json.dumps(result.summary, indent=2) + "\n")
        config = out / "config.json"
        config.write_text(json.dumps(result.config.model_dump(mode="json"), indent=2) + "\n")
        files += [summary, config]
        manifest = {
            "schema": RUN_SCHEMA,
            "name": result.config.name,
            "seed": result.seed,
            "config_sha256": result.config.digest(),
            "code_version": result.code_version,
            "files": {p.name: sha256_file(p) for p in sorted(files)},
        }
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n")
        return path
    except OSError as exc:
        raise IoFailure(f"cannot write run output to {out}: {exc}") from exc


# -- reading -----------------------------------------------------------------


def read_jsonl(path: str | Path, skip_header: bool = False) -> List[dict]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    rows = [json.loads(l) for l in lines if l.strip()]
    return rows[1:] if skip_header else rows


def read_trades(path: str | Path) -> List[Trade]:
    return [Trade(r["price"], r["volume"], r["buyer"], r["seller"], r["time"], Side(r["aggressor"]),
                  r["maker_quote_id"], r["taker_order_id"], r["self_trade"]) for r in read_jsonl(path)]


def read_snapshots(path: str | Path) -> List[BookSnapshot]:
    return [BookSnapshot(r["time"], _parse_levels(r["bids"]), _parse_levels(r["asks"]))
            for r in read_jsonl(path)]


def read_quote_log(path: str | Path) -> List[QuoteEvent]:
    return [QuoteEvent(r["time"], r["kind"], r["quote_id"], r["owner"], Side(r["side"]), r["price"],
                       r["remaining"], r["expiry"]) for r in read_jsonl(path)]


def read_metrics(path: str | Path) -> Dict[str, Any]:
    rows = read_jsonl(path)
    if not rows or rows[0].get("schema") != METRIC_SCHEMA:
        raise IoFailure(f"{path}: missing or unknown metrics schema header")
    return {"header": rows[0], "rows": rows[1:]}
