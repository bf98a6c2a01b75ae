"""Market-quality and liquidity measures over a trade tape and book snapshots.

Each window ``[start, start + window)`` reports spreads, depth near the
mid, volume, realized volatility, Amihud illiquidity, return
autocorrelation, mean quote resting time and a composite liquidity index.
Spread and depth are kept as exact fractions of ticks/shares; log-return
based fields are floats. Absent values are ``None``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from statistics import fmean, pstdev
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .book import BookSnapshot, QuoteEvent, Trade

SCHEMA = "metrics/1"

INDEX_INPUTS = ("quoted_spread", "amihud", "depth_band", "trade_volume")
# sign applied before z-scoring so that higher always means more liquid
INDEX_SIGNS = {"quoted_spread": -1, "amihud": -1, "depth_band": 1, "trade_volume": 1}


@dataclass
class WindowMetrics:
    start: int
    end: int
    quoted_spread: Optional[Fraction] = None
    effective_spread: Optional[Fraction] = None
    depth_band: Optional[Fraction] = None
    trade_volume: int = 0
    trade_count: int = 0
    realized_vol: Optional[float] = None
    amihud: Optional[float] = None
    return_autocorr: Optional[float] = None
    mean_resting_time: Optional[Fraction] = None
    liquidity_index: Optional[float] = None
    empty: bool = False


COLUMNS = [f.name for f in fields(WindowMetrics)]


@dataclass
class MetricsSeries:
    window: int
    band: float
    lag: int
    rows: List[WindowMetrics]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]


def _mean(xs: Sequence) -> Optional[Fraction]:
    return Fraction(sum(xs)) / len(xs) if xs else None


def autocorr(xs: Sequence[float], lag: int) -> Optional[float]:
    """Sample autocorrelation at ``lag``; None when undefined."""
    n = len(xs)
    if lag < 1 or n <= lag:
        return None
    m = fmean(xs)
    dev = [x - m for x in xs]
    den = sum(d * d for d in dev)
    if den == 0:
        return None
    return sum(dev[i] * dev[i + lag] for i in range(n - lag)) / den


def depth_within(snap: BookSnapshot, band: float) -> Optional[int]:
    m2 = snap.mid2
    if m2 is None:
        return None
    lim = band * m2
    return sum(l.volume for l in snap.bids + snap.asks if abs(2 * l.price - m2) <= lim)


def resting_times(quote_log: Iterable[QuoteEvent]) -> List[tuple]:
    """(removal_time, lifetime) for quotes removed by a full fill or expiry."""
    born: Dict[int, int] = {}
    out = []
    for ev in quote_log:
        if ev.kind == "rest":
            born[ev.quote_id] = ev.time
        elif ev.quote_id in born and (
            ev.kind == "expire" or (ev.kind == "fill" and ev.remaining == 0)
        ):
            out.append((ev.time, ev.time - born.pop(ev.quote_id)))
    return out


def mean_resting_time(quote_log: Iterable[QuoteEvent]) -> Optional[Fraction]:
    return _mean([life for _, life in resting_times(quote_log)])


def _zscores(values: List[Optional[float]]) -> List[Optional[float]]:
    present = [v for v in values if v is not None]
    if not present:
        return [None] * len(values)
    mu = fmean(present)
    sd = pstdev(present)
    return [None if v is None else (0.0 if sd == 0 else (v - mu) / sd) for v in values]


def liquidity_index(rows: Sequence[WindowMetrics],
                    weights: Optional[Mapping[str, float]] = None) -> List[Optional[float]]:
    """Weighted mean of per-run z-scores of the signed index inputs."""
    weights = dict.fromkeys(INDEX_INPUTS, 1.0) if weights is None else dict(weights)
    unknown = set(weights) - set(INDEX_INPUTS)
    if unknown:
        raise ValueError(f"unknown index inputs {sorted(unknown)}")
    z = {}
    for name in INDEX_INPUTS:
        raw = [None if r.empty or getattr(r, name) is None
               else INDEX_SIGNS[name] * float(getattr(r, name)) for r in rows]
        z[name] = _zscores(raw)
    out = []
    for i in range(len(rows)):
        num = den = 0.0
        for name, w in weights.items():
            if w and z[name][i] is not None:
                num += w * z[name][i]
                den += w
        out.append(num / den if den else None)
    return out


def compute_metrics(
    tape: Sequence[Trade],
    snapshots: Sequence[BookSnapshot],
    window: int,
    band: float = 0.01,
    lag: int = 1,
    quote_log: Sequence[QuoteEvent] = (),
    weights: Optional[Mapping[str, float]] = None,
    start: Optional[int] = None,
    end: Optional[int] = None,
) -> MetricsSeries:
    """Windowed metrics; inputs must be sorted by time."""
    if window <= 0:
        raise ValueError("window must be positive")
    times = [t.time for t in tape] + [s.time for s in snapshots]
    lives = resting_times(quote_log)
    times += [t for t, _ in lives]
    if not times and start is None:
        return MetricsSeries(window, band, lag, [])
    lo = (min(times) if start is None else start) // window * window
    hi = max(times) if end is None else end - 1
    n_win = max(0, (hi - lo) // window + 1)
    rows = [WindowMetrics(lo + k * window, lo + (k + 1) * window) for k in range(n_win)]

    def win(t: int) -> Optional[int]:
        k = (t - lo) // window
        return k if 0 <= k < n_win else None

    per_snap: List[list] = [[] for _ in rows]
    for s in snapshots:
        k = win(s.time)
        if k is not None:
            per_snap[k].append(s)
    snap_times = [s.time for s in snapshots]

    per_trade: List[list] = [[] for _ in rows]
    prev_price: Optional[int] = None
    for tr in tape:
        j = bisect.bisect_right(snap_times, tr.time) - 1
        m2 = snapshots[j].mid2 if j >= 0 else None
        ret = None if prev_price is None else math.log(tr.price / prev_price)
        prev_price = tr.price
        k = win(tr.time)
        if k is not None:
            per_trade[k].append((tr, m2, ret))

    per_life: List[list] = [[] for _ in rows]
    for t, life in lives:
        k = win(t)
        if k is not None:
            per_life[k].append(life)

    for row, snaps, trades, ls in zip(rows, per_snap, per_trade, per_life):
        row.empty = not snaps and not trades
        row.quoted_spread = _mean([s.asks[0].price - s.bids[0].price for s in snaps if s.mid2])
        row.depth_band = _mean([d for d in (depth_within(s, band) for s in snaps) if d is not None])
        row.effective_spread = _mean([abs(2 * tr.price - m2) for tr, m2, _ in trades if m2])
        row.trade_volume = sum(tr.volume for tr, _, _ in trades)
        row.trade_count = len(trades)
        am = [abs(r) / (tr.price * tr.volume) for tr, _, r in trades if r is not None]
        row.amihud = fmean(am) if am else None
        mids = [s.mid2 for s in snaps if s.mid2]
        rets = [math.log(b / a) for a, b in zip(mids, mids[1:])]
        row.realized_vol = pstdev(rets) if rets else None
        row.return_autocorr = autocorr(rets, lag)
        row.mean_resting_time = _mean(ls)

    for row, li in zip(rows, liquidity_index(rows, weights)):
        row.liquidity_index = li
    return MetricsSeries(window, band, lag, rows)


def summarize(series: MetricsSeries) -> Dict[str, Optional[float]]:
    """Run-level averages over non-empty windows."""
    rows = [r for r in series.rows if not r.empty]

    def avg(name):
        xs = [float(getattr(r, name)) for r in rows if getattr(r, name) is not None]
        return fmean(xs) if xs else None

    return {
        "quoted_spread": avg("quoted_spread"),
        "effective_spread": avg("effective_spread"),
        "depth_band": avg("depth_band"),
        "trade_volume": float(sum(r.trade_volume for r in rows)),
        "trade_count": float(sum(r.trade_count for r in rows)),
        "realized_vol": avg("realized_vol"),
        "amihud": avg("amihud"),
    }


def row_dict(row: WindowMetrics) -> dict:
    out = {}
    for k, v in asdict(row).items():
        out[k] = float(v) if isinstance(v, Fraction) else v
    return out
