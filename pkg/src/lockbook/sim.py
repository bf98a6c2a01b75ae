"""Discrete-event simulation of one or more trading days.

Time is integer milliseconds on a single absolute clock: day ``d`` starts at
``d * day_length_ms``. A heap orders session events, snapshots and agent
polls; at equal times the order is jump, resume, halt, snapshot, poll,
close. Each poll expires stale quotes, builds views for every agent, then
applies their actions one by one in a freshly permuted order.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple

from . import __version__
from .agents import Action, AgentSpec, Cancel, Convert, Extend, Kind, MarketView, OwnQuote, Submit, make_agent
from .book import BookError, BookSnapshot, Fixed, OrderBook, Quote, QuoteEvent, Side, Trade
from .config import ScenarioConfig
from .metrics import MetricsSeries, compute_metrics, mean_resting_time, summarize
from .registry import Registry, Settlement
from .session import Phase, Session
from .streams import Streams, substream

# event priorities at equal timestamps
JUMP, RESUME, HALT, SNAPSHOT, POLL, CLOSE = range(6)


class SimulationError(RuntimeError):
    pass


@dataclass
class Account:
    id: str
    kind: Kind
    cash: int
    cash0: int
    shares0: int
    locked: int = 0
    unlocked: int = 0
    reserved_cash: int = 0
    reserved_shares: int = 0
    # quote id -> [side, price, remaining, expiry]
    open: Dict[int, list] = field(default_factory=dict)
    # FIFO of [acquired_at, count] for holding periods
    lots: Deque[list] = field(default_factory=deque)
    held_share_ms: int = 0
    closed_shares: int = 0
    bought: int = 0
    sold: int = 0
    haircuts: int = 0
    rejected: Counter = field(default_factory=Counter)

    def release(self, qid: int, tick_value: int) -> None:
        side, price, remaining, _ = self.open.pop(qid)
        if side is Side.BUY:
            self.reserved_cash -= price * remaining * tick_value
        else:
            self.reserved_shares -= remaining

    def acquire(self, t: int, n: int) -> None:
        self.lots.append([t, n])
        self.bought += n

    def dispose(self, t: int, n: int) -> None:
        self.sold += n
        while n:
            lot = self.lots[0]
            take = min(n, lot[1])
            self.held_share_ms += take * (t - lot[0])
            self.closed_shares += take
            lot[1] -= take
            n -= take
            if lot[1] == 0:
                self.lots.popleft()

    def mean_holding_ms(self, horizon: int) -> Optional[float]:
        """Share-weighted holding time; open positions are censored at ``horizon``."""
        open_ms = sum(n * (horizon - t) for t, n in self.lots)
        open_n = sum(n for _, n in self.lots)
        total = self.closed_shares + open_n
        return (self.held_share_ms + open_ms) / total if total else None


@dataclass(frozen=True)
class TradeRecord:
    seq: int
    day: int
    time: int
    price: int
    volume: int
    buyer: str
    seller: str
    aggressor: str
    maker_quote_id: int
    taker_order_id: int
    self_trade: bool
    notional: int
    haircut: int
    locked_sold: int

    def as_trade(self) -> Trade:
        return Trade(self.price, self.volume, self.buyer, self.seller, self.time,
                     Side(self.aggressor), self.maker_quote_id, self.taker_order_id, self.self_trade)


@dataclass(frozen=True)
class EventRecord:
    time: int
    day: int
    kind: str
    detail: str = ""


@dataclass
class RunResult:
    config: ScenarioConfig
    seed: int
    trades: List[TradeRecord]
    quote_log: List[QuoteEvent]
    snapshots: List[BookSnapshot]
    ledger: List[dict]
    events: List[EventRecord]
    agents: List[dict]
    unlock_log: List[Tuple[str, int, int, int, float]]
    metrics: MetricsSeries
    summary: Dict[str, Optional[float]]
    code_version: str = __version__


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: Optional[int] = None) -> None:
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.streams = Streams(self.seed)
        s = cfg.session
        self.day_length = s.day_length_ms
        self.tick_value = cfg.asset.tick_value
        self.issuer = cfg.asset.issuer
        self.book = OrderBook(cfg.regime, cfg.book.expiry_grid_ms, s.min_validto_floor_ms)
        self.book.is_open = False
        self.registry = Registry(
            cfg.lock.policy(), self.streams["registry"], self.tick_value,
            day_rng=lambda issuer, day: substream(self.seed, f"registry:{issuer}:{day}"),
        )
        self.session = Session(s.schedule(0))
        self.haircut_rate = cfg.lock.haircut_rate if cfg.lock.enabled else 0.0

        self.agents = []
        self.accounts: Dict[str, Account] = {}
        for aid, group in cfg.agent_specs():
            agent = make_agent(AgentSpec(aid, group.kind, dict(group.params), group.cash, group.shares))
            self.agents.append(agent)
            acc = Account(aid, group.kind, group.cash, group.cash, group.shares)
            if group.shares:
                self.registry.issue(aid, self.issuer, group.shares)
                acc.lots.append([0, group.shares])
            self.accounts[aid] = acc
            self._sync(aid)
        self._rngs = [self.streams.agent(a.id) for a in self.agents]
        self._order_rng = self.streams["schedule"]
        self._fund_rng = self.streams["fundamental"]

        self.fundamental = float(cfg.asset.initial_value)
        self.recent: Deque[int] = deque(maxlen=cfg.simulation.recent_trades)
        self.last_price: Optional[int] = None
        self.trades: List[TradeRecord] = []
        self.snapshots: List[BookSnapshot] = []
        self.ledger: List[dict] = []
        self.events: List[EventRecord] = []
        self._owner: Dict[int, str] = {}
        self._queue: List[tuple] = []
        self._seq = 0
        self._phase: Optional[Phase] = None
        self.day = 0
        self.now = 0

    # -- bookkeeping -----------------------------------------------------------

    def _sync(self, aid: str) -> None:
        acc = self.accounts[aid]
        acc.locked, acc.unlocked = self.registry.counts(aid, self.issuer)

    def _log(self, kind: str, detail: str = "") -> None:
        self.events.append(EventRecord(self.now, self.day, kind, detail))

    def _push(self, t: int, prio: int, kind: str, payload=None) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (t, prio, self._seq, kind, payload))

    def _released(self, ids: List[int]) -> None:
        for qid in ids:
            aid = self._owner.pop(qid)
            self.accounts[aid].release(qid, self.tick_value)

    def reference_price(self) -> int:
        if self.last_price is not None:
            return self.last_price
        bid, ask = self.book.best_bid_ask()
        if bid and ask:
            return (bid.price + ask.price) // 2
        return self.cfg.asset.initial_value

    # -- main loop ---------------------------------------------------------------

    def run(self) -> RunResult:
        for day in range(self.cfg.simulation.horizon_days):
            self._run_day(day)
        return self._result()

    def _run_day(self, day: int) -> None:
        cfg = self.cfg
        s = cfg.session
        base = day * self.day_length
        self.day = day
        self.session = Session(s.schedule(base))
        sched = self.session.schedule
        # lots reaching the age cap are released before the day's first trade
        freed = self.registry.force_unlock(day, self.issuer)
        if freed:
            self.now = base
            self._log("force_unlock", str(freed))
            for aid in self.accounts:
                self._sync(aid)
        open_t, close_t = sched.open_time, sched.close_time
        self._push(open_t, SNAPSHOT - 1, "open")
        self._push(close_t, CLOSE, "close")
        for h in s.halts:
            if h.day == day:
                self._push(base + h.at_ms, HALT, "halt")
                self._push(base + h.resume_ms, RESUME, "resume", base + h.at_ms)
        f = cfg.fundamental
        n_jumps = int(self._fund_rng.poisson(f.jump_rate_per_day)) if f.jump_rate_per_day else 0
        for _ in range(n_jumps):
            t = int(self._fund_rng.integers(open_t, close_t))
            size = float(self._fund_rng.normal(0.0, f.jump_sigma))
            self._push(t, JUMP, "jump", size)
        for t in range(open_t + cfg.simulation.snapshot_offset, close_t, cfg.simulation.snapshot_ms):
            self._push(t, SNAPSHOT, "snapshot")
        for t in range(open_t, close_t, cfg.simulation.poll_ms):
            self._push(t, POLL, "poll")

        while self._queue:
            t, _, _, kind, payload = heapq.heappop(self._queue)
            if t < self.now:
                raise SimulationError(f"event at {t} scheduled before current time {self.now}")
            self.now = t
            getattr(self, f"_on_{kind}")(payload)
        self._end_of_day(day)

    def _on_open(self, _):
        self.book.is_open = True
        self._log("open")
        self._track_phase()

    def _on_close(self, _):
        self._released(self.book.clear(self.now))
        self.book.is_open = False
        self._log("close")
        self._phase = None

    def _on_halt(self, _):
        self.session.halt(self.now)
        self._released(self.book.clear(self.now))
        self.book.is_open = False
        self._log("halt")

    def _on_resume(self, halted_at):
        self.session.restart(halted_at, self.now)
        self.book.is_open = True
        self._log("resume")
        self._phase = None
        self._track_phase()

    def _on_jump(self, size):
        self.fundamental *= math.exp(size)
        self._log("jump", f"{self.fundamental:.6f}")

    def _on_snapshot(self, _):
        if not self.session.is_open(self.now):
            return
        self._released(self.book.expire(self.now))
        snap = self.book.snapshot(self.now)
        k = self.cfg.simulation.snapshot_levels
        self.snapshots.append(BookSnapshot(snap.time, snap.bids[:k], snap.asks[:k]))

    def _track_phase(self) -> None:
        ph = self.session.phase(self.now)
        if ph is not self._phase:
            self._phase = ph
            self._log("phase", ph.value)

    def _on_poll(self, _):
        now = self.now
        if not self.session.is_open(now):
            return
        self._track_phase()
        self._released(self.book.expire(now))
        bid, ask = self.book.best_bid_ask()
        recent = tuple(self.recent)
        ref = self.reference_price()
        min_size = self.session.min_quote_size(now)
        min_validto = max(self.session.min_validto(now), self.book.min_validto_ms)
        grid = self.book.grid
        order = self._order_rng.permutation(len(self.agents))
        # positional construction; field order follows MarketView
        head = (now, bid, ask, recent, ref, min_size, min_validto, grid)
        tail = (self.haircut_rate, self.tick_value)
        nms = self.session.schedule.nms
        make = MarketView._make
        decided = []
        for i in order.tolist():
            agent = self.agents[i]
            acc = self.accounts[agent.id]
            view = make(head + (
                acc.cash, acc.locked, acc.unlocked, acc.reserved_cash, acc.reserved_shares,
                tuple([OwnQuote(q, *v) for q, v in acc.open.items()]) if acc.open else (),
                self.fundamental if agent.kind is Kind.VALUE else None,
            ) + tail + ((now - acc.lots[0][0]) if acc.lots else None, nms))
            actions = agent.decide(view, self._rngs[i])
            if actions:
                decided.append((acc, actions))
        for acc, actions in decided:
            for act in actions:
                self._apply(acc, act)

    # -- actions -------------------------------------------------------------------

    def _apply(self, acc: Account, act: Action) -> None:
        now = self.now
        if isinstance(act, Submit):
            self._submit(acc, act)
            return
        qid = act.quote_id
        if self._owner.get(qid) != acc.id:
            acc.rejected["UnknownQuote"] += 1
            return
        try:
            if isinstance(act, Cancel):
                self.book.cancel(qid, now)
                acc.release(qid, self.tick_value)
                del self._owner[qid]
            elif isinstance(act, Convert):
                acc.open[qid][3] = self.book.convert_rolling(qid, now)
            elif isinstance(act, Extend):
                self.book.extend_validity(qid, act.new_expiry, now)
                acc.open[qid][3] = act.new_expiry
        except BookError as exc:
            acc.rejected[type(exc).__name__] += 1

    def _submit(self, acc: Account, act: Submit) -> None:
        now, tv = self.now, self.tick_value
        if act.side is Side.BUY:
            if act.price * act.volume * tv > acc.cash - acc.reserved_cash:
                acc.rejected["InsufficientCash"] += 1
                return
        elif act.volume > acc.locked + acc.unlocked - acc.reserved_shares:
            acc.rejected["InsufficientShares"] += 1
            return
        quote = Quote(act.side, act.price, act.volume, act.validity, acc.id)
        admission = self.session.admit(quote, now)
        if not admission:
            acc.rejected[admission.reason.value] += 1
            return
        try:
            result = self.book.submit(quote, now, min_validto=self.session.min_validto(now))
        except (BookError, ValueError) as exc:
            acc.rejected[type(exc).__name__] += 1
            return
        for tr in result.fills:
            self._settle(tr)
        if result.resting is not None:
            q = self.book.get(result.resting)
            expiry = q.validity.expiry if isinstance(q.validity, Fixed) else None
            acc.open[q.id] = [q.side, q.price, q.remaining, expiry]
            if q.side is Side.BUY:
                acc.reserved_cash += q.price * q.remaining * tv
            else:
                acc.reserved_shares += q.remaining
            self._owner[q.id] = acc.id

    def _settle(self, tr: Trade) -> None:
        st: Settlement = self.registry.settle_trade(tr, self.issuer, self.day)
        buyer, seller = self.accounts[tr.buyer], self.accounts[tr.seller]
        maker = seller if tr.aggressor is Side.BUY else buyer
        rec = maker.open[tr.maker_quote_id]
        rec[2] -= tr.volume
        if tr.aggressor is Side.BUY:
            maker.reserved_shares -= tr.volume
        else:
            maker.reserved_cash -= rec[1] * tr.volume * self.tick_value
        if rec[2] == 0:
            del maker.open[tr.maker_quote_id]
            del self._owner[tr.maker_quote_id]
        buyer.cash += st.buyer_cash
        seller.cash += st.seller_cash
        seller.haircuts += st.haircut
        seller.unlocked -= st.unlocked_sold
        seller.locked -= st.locked_sold
        if self.cfg.lock.enabled:
            buyer.locked += tr.volume
        else:
            buyer.unlocked += tr.volume
        seller.dispose(tr.time, tr.volume)
        buyer.acquire(tr.time, tr.volume)
        self.recent.append(tr.price)
        self.last_price = tr.price
        self.trades.append(TradeRecord(
            len(self.trades), self.day, tr.time, tr.price, tr.volume, tr.buyer, tr.seller,
            tr.aggressor.value, tr.maker_quote_id, tr.taker_order_id, tr.self_trade,
            st.notional, st.haircut, st.locked_sold,
        ))

    def _end_of_day(self, day: int) -> None:
        if self.cfg.lock.enabled:
            k = self.registry.daily_unlock(day, self.issuer)
            self._log("unlock", str(k))
        for aid in self.accounts:
            self._sync(aid)
        self.ledger.extend(self.registry.snapshot(day))

    # -- results ---------------------------------------------------------------------

    def liquidation_price(self) -> int:
        return self.last_price if self.last_price is not None else self.cfg.asset.initial_value

    def _agent_rows(self, horizon: int) -> List[dict]:
        p = self.liquidation_price()
        v0 = self.cfg.asset.initial_value
        rows = []
        for acc in self.accounts.values():
            value = acc.unlocked * p + acc.locked * p * (1 - self.haircut_rate)
            pnl = acc.cash - acc.cash0 + value * self.tick_value - acc.shares0 * v0 * self.tick_value
            rows.append({
                "id": acc.id, "kind": acc.kind.value, "cash": acc.cash,
                "locked": acc.locked, "unlocked": acc.unlocked,
                "bought": acc.bought, "sold": acc.sold, "haircuts": acc.haircuts,
                "pnl": pnl, "mean_holding_ms": acc.mean_holding_ms(horizon),
                "rejected": sum(acc.rejected.values()),
            })
        return rows

    def _result(self) -> RunResult:
        cfg = self.cfg
        m = cfg.metrics
        horizon = cfg.simulation.horizon_days * self.day_length
        tape = [t.as_trade() for t in self.trades]
        series = compute_metrics(tape, self.snapshots, m.window_ms, m.band, m.lag,
                                 quote_log=self.book.log, weights=m.index_weights,
                                 start=0, end=horizon)
        agents = self._agent_rows(horizon)
        summary = summarize(series)
        rest = mean_resting_time(self.book.log)
        summary["mean_resting_time"] = None if rest is None else float(rest)
        summary["haircuts"] = float(sum(t.haircut for t in self.trades))
        summary.update(_group_stats(agents, Kind.MOMENTUM.value, "momentum"))
        summary["first_trade_time"] = float(self.trades[0].time) if self.trades else None
        summary["first_trade_price"] = float(self.trades[0].price) if self.trades else None
        return RunResult(cfg, self.seed, self.trades, list(self.book.log), self.snapshots,
                         self.ledger, self.events, agents, list(self.registry.unlock_log),
                         series, summary)


def _group_stats(rows: List[dict], kind: str, label: str) -> Dict[str, Optional[float]]:
    group = [r for r in rows if r["kind"] == kind]
    held = [(r["mean_holding_ms"], r["bought"]) for r in group if r["mean_holding_ms"] is not None]
    weight = sum(w for _, w in held)
    return {
        f"{label}_pnl": float(sum(r["pnl"] for r in group)) if group else None,
        f"{label}_holding_ms": sum(h * w for h, w in held) / weight if weight else None,
    }


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None) -> RunResult:
    return Simulation(cfg, seed).run()
