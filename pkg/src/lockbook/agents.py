"""Trader population.

Agents read a :class:`MarketView` and return a list of actions. They never
touch the book or ledger directly; the simulation applies actions in a
seeded random order and feeds fills back through the view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Type, Union

import numpy as np

from .book import Fixed, Level, Side, Validity, snap_up


class Kind(str, Enum):
    ZI = "zi"
    MARKET_MAKER = "market_maker"
    MOMENTUM = "momentum"
    VALUE = "value"
    BLOCK = "block"


# -- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class Submit:
    side: Side
    price: int
    volume: int
    validity: Validity


@dataclass(frozen=True)
class Cancel:
    quote_id: int


@dataclass(frozen=True)
class Convert:
    quote_id: int


@dataclass(frozen=True)
class Extend:
    quote_id: int
    new_expiry: int


Action = Union[Submit, Cancel, Convert, Extend]


@dataclass(frozen=True)
class OwnQuote:
    id: int
    side: Side
    price: int
    remaining: int
    expiry: Optional[int]


class MarketView(NamedTuple):
    """Read-only snapshot handed to one agent at one event time."""

    time: int
    best_bid: Optional[Level]
    best_ask: Optional[Level]
    recent_prices: Tuple[int, ...]
    reference_price: int
    min_size: int
    min_validto: int
    grid: int
    cash: int
    locked: int
    unlocked: int
    reserved_cash: int = 0
    reserved_shares: int = 0
    open_quotes: Tuple[OwnQuote, ...] = ()
    fundamental: Optional[float] = None
    haircut_rate: float = 0.0
    tick_value: int = 1
    oldest_position_age: Optional[int] = None
    nms: int = 1

    @property
    def available_cash(self) -> int:
        return self.cash - self.reserved_cash

    @property
    def available_shares(self) -> int:
        return self.locked + self.unlocked - self.reserved_shares

    @property
    def available_unlocked(self) -> int:
        # resting sells are assumed to draw on unlocked shares first
        return max(0, self.unlocked - self.reserved_shares)

    def affordable(self, price: int) -> int:
        return max(0, self.available_cash // (price * self.tick_value))

    def own(self, side: Side) -> List[OwnQuote]:
        return [q for q in self.open_quotes if q.side is side]


def quote_validity(view: MarketView, life_ms: int) -> Fixed:
    """Shortest on-grid expiry that honours both ``life_ms`` and the session floor."""
    return Fixed(snap_up(view.time + max(life_ms, view.min_validto), view.grid))


# -- spread model ------------------------------------------------------------


@dataclass(frozen=True)
class SpreadComponents:
    handling: float = 1.0
    noncompetitive: float = 0.0
    inventory_coeff: float = 0.0
    adverse: float = 0.0
    free_option_coeff: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")


def mm_half_spread(c: SpreadComponents, min_validto: float, sigma: float) -> float:
    """Half-spread in ticks: fixed costs plus a free-option term growing with quote life."""
    return c.handling + c.noncompetitive + c.adverse + c.free_option_coeff * min_validto * sigma


def inventory_skew(c: SpreadComponents, q: float, q_max: float) -> float:
    """Shift of the quote midpoint in ticks; long inventory lowers both quotes."""
    if q_max <= 0:
        raise ValueError("q_max must be > 0")
    return -c.inventory_coeff * (q / q_max)


def mm_quotes(c: SpreadComponents, center: float, q: float, q_max: float,
              min_validto: float, sigma: float) -> Tuple[int, int]:
    h = mm_half_spread(c, min_validto, sigma)
    mid = center + inventory_skew(c, q, q_max)
    bid = math.floor(mid - h)
    ask = bid + math.ceil(2 * h)
    if ask == bid:
        ask += 1
    return max(1, bid), max(2, ask)


# -- agents -------------------------------------------------------------------


class Agent:
    kind: Kind
    Params: Type

    def __init__(self, agent_id: str, params) -> None:
        self.id = agent_id
        self.p = params

    def decide(self, view: MarketView, rng: np.random.Generator) -> List[Action]:
        raise NotImplementedError

    def is_null(self) -> bool:
        """True when the parameters guarantee no actions."""
        return False


@dataclass(frozen=True)
class ZIParams:
    rate: float = 0.1
    size: int = 1
    band: int = 5
    life_ms: int = 0


class ZeroIntelligence(Agent):
    """Random unit limit orders priced uniformly around the reference price."""

    kind = Kind.ZI
    Params = ZIParams

    def is_null(self) -> bool:
        return self.p.rate == 0

    def decide(self, view, rng):
        if self.p.rate == 0 or rng.random() >= self.p.rate:
            return []
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        price = max(1, view.reference_price + int(rng.integers(-self.p.band, self.p.band + 1)))
        volume = max(self.p.size, view.min_size)
        if side is Side.BUY and view.affordable(price) < volume:
            return []
        if side is Side.SELL and view.available_shares < volume:
            return []
        return [Submit(side, price, volume, quote_validity(view, self.p.life_ms))]


@dataclass(frozen=True)
class MarketMakerParams:
    handling: float = 1.0
    noncompetitive: float = 0.0
    inventory_coeff: float = 2.0
    adverse: float = 1.0
    free_option_coeff: float = 0.0
    q_max: int = 500
    size: int = 10
    life_ms: int = 0
    drift: int = 2
    vol_window: int = 20
    target_inventory: int = 0


class MarketMaker(Agent):
    """Keeps one bid and one ask around the reference price.

    Quotes are refreshed when filled or expired, and cancelled for repricing
    once their valid-to time allows it.
    """

    kind = Kind.MARKET_MAKER
    Params = MarketMakerParams

    def __init__(self, agent_id, params):
        super().__init__(agent_id, params)
        p = params
        self.spread = SpreadComponents(
            p.handling, p.noncompetitive, p.inventory_coeff, p.adverse, p.free_option_coeff
        )

    def is_null(self) -> bool:
        return self.p.size == 0

    def sigma(self, prices: Sequence[int]) -> float:
        tail = prices[-(self.p.vol_window + 1):]
        if len(tail) < 3:
            return 0.0
        d = [b - a for a, b in zip(tail, tail[1:])]
        m = sum(d) / len(d)
        return math.sqrt(sum((x - m) ** 2 for x in d) / len(d))

    def targets(self, view: MarketView) -> Tuple[int, int]:
        life = max(self.p.life_ms, view.min_validto)
        q = view.locked + view.unlocked - self.p.target_inventory
        return mm_quotes(self.spread, view.reference_price, q, self.p.q_max,
                         life, self.sigma(view.recent_prices))

    def decide(self, view, rng):
        if self.p.size == 0:
            return []
        bid, ask = self.targets(view)
        volume = max(self.p.size, view.min_size)
        validity = quote_validity(view, self.p.life_ms)
        actions: List[Action] = []
        for side, target in ((Side.BUY, bid), (Side.SELL, ask)):
            mine = view.own(side)
            live = []
            for oq in mine:
                stale = abs(oq.price - target) >= self.p.drift
                if stale and oq.expiry is not None and view.time >= oq.expiry:
                    actions.append(Cancel(oq.id))
                else:
                    live.append(oq)
            if live:
                continue
            if side is Side.BUY:
                if view.affordable(target) >= volume:
                    actions.append(Submit(side, target, volume, validity))
            else:
                freed = sum(oq.remaining for oq in mine if oq not in live)
                if view.available_shares + freed >= volume:
                    actions.append(Submit(side, target, volume, validity))
        return actions


@dataclass(frozen=True)
class MomentumParams:
    rate: float = 0.2
    window: int = 20
    threshold: float = 0.002
    shares_per_return: float = 20000.0
    cap: int = 100
    slippage: int = 1
    life_ms: int = 0
    max_hold_ms: int = 10 * 60_000
    lock_aware: bool = True


class Momentum(Agent):
    """Long-only trend follower on the trailing log return over a window of trades.

    Locked shares are only sold when the signal is strong enough to cover the
    haircut (unless ``lock_aware`` is off).
    """

    kind = Kind.MOMENTUM
    Params = MomentumParams

    def is_null(self) -> bool:
        return self.p.rate == 0 or self.p.shares_per_return == 0

    def signal(self, prices: Sequence[int]) -> float:
        if len(prices) <= self.p.window:
            return 0.0
        return math.log(prices[-1] / prices[-1 - self.p.window])

    def decide(self, view, rng):
        if self.is_null() or rng.random() >= self.p.rate:
            return []
        ret = self.signal(view.recent_prices)
        validity = quote_validity(view, self.p.life_ms)
        if ret > self.p.threshold and view.best_ask is not None:
            price = view.best_ask.price + self.p.slippage
            want = min(self.p.cap, max(1, math.floor(self.p.shares_per_return * ret)))
            want = max(want, view.min_size)
            if view.affordable(price) >= want:
                return [Submit(Side.BUY, price, want, validity)]
            return []
        if view.best_bid is None or view.available_shares <= 0:
            return []
        price = max(1, view.best_bid.price - self.p.slippage)
        if self.p.lock_aware:
            free = view.available_unlocked
            if -ret > self.p.threshold + view.haircut_rate:
                free = view.available_shares
        else:
            free = view.available_shares
        timed_out = (
            view.oldest_position_age is not None and view.oldest_position_age >= self.p.max_hold_ms
        )
        if ret < -self.p.threshold or timed_out:
            volume = min(free, self.p.cap)
            if volume >= max(1, view.min_size):
                return [Submit(Side.SELL, price, volume, validity)]
        return []


@dataclass(frozen=True)
class ValueParams:
    theta: float = 0.02
    target: int = 100
    lot: int = 10
    rate: float = 0.2
    life_ms: int = 0
    quote: bool = False
    urgency: float = 0.0
    impact: float = 0.0


class Value(Agent):
    """Trades toward a target holding when price strays from fundamental value.

    With ``quote`` on it also rests rebalancing orders whose price concedes
    ``impact`` ticks per NMS multiple of size, offset by ``urgency`` ticks
    through the fundamental.
    """

    kind = Kind.VALUE
    Params = ValueParams

    def is_null(self) -> bool:
        return self.p.rate == 0

    def decide(self, view, rng):
        p = self.p
        if p.rate == 0 or view.fundamental is None or rng.random() >= p.rate:
            return []
        V = view.fundamental
        held = view.locked + view.unlocked
        validity = quote_validity(view, p.life_ms)
        pending_buy = sum(q.remaining for q in view.own(Side.BUY))
        pending_sell = sum(q.remaining for q in view.own(Side.SELL))
        ask, bid = view.best_ask, view.best_bid
        if ask is not None and ask.price < V * (1 - p.theta) and held + pending_buy < p.target:
            n = min(p.target - held - pending_buy, max(p.lot, view.min_size), view.affordable(ask.price))
            if n >= max(1, view.min_size):
                return [Submit(Side.BUY, ask.price, n, validity)]
        if bid is not None and bid.price > V * (1 + p.theta) and view.available_shares > 0:
            n = min(view.available_shares, max(p.lot, view.min_size))
            if n >= max(1, view.min_size):
                return [Submit(Side.SELL, bid.price, n, validity)]
        if not p.quote:
            return []
        return self._rebalance(view, held, pending_buy, pending_sell, validity)

    def _rebalance(self, view, held, pending_buy, pending_sell, validity) -> List[Action]:
        p = self.p
        V = view.fundamental
        size = max(p.lot, view.min_size)
        m = size / view.nms
        if held + pending_buy < p.target and not view.own(Side.BUY):
            size = min(size, p.target - held - pending_buy)
            price = math.floor(V + p.urgency - p.impact * m)
            if price >= 1 and size >= view.min_size and view.affordable(price) >= size:
                return [Submit(Side.BUY, price, size, validity)]
        if held - pending_sell > p.target and not view.own(Side.SELL):
            size = min(size, held - pending_sell - p.target, view.available_shares)
            price = math.ceil(V - p.urgency + p.impact * m)
            if size >= max(1, view.min_size):
                return [Submit(Side.SELL, max(1, price), size, validity)]
        return []


@dataclass(frozen=True)
class BlockParams:
    side: str = "buy"
    parent: int = 10_000
    child: int = 500
    interval_ms: int = 30_000
    start_ms: int = 0
    slippage: int = 2
    life_ms: int = 0


class Block(Agent):
    """Works a parent order as marketable-limit children on a fixed clock.

    A child that the budget cannot cover is postponed, so the children always
    add up to the parent.
    """

    kind = Kind.BLOCK
    Params = BlockParams

    def __init__(self, agent_id, params):
        super().__init__(agent_id, params)
        self.side = Side(params.side)
        self.remaining = params.parent
        self.next_time: Optional[int] = None

    def is_null(self) -> bool:
        return self.p.parent == 0

    def decide(self, view, rng):
        if self.remaining <= 0:
            return []
        if self.next_time is None:
            self.next_time = self.p.start_ms
        if view.time < self.next_time:
            return []
        n = min(self.p.child, self.remaining)
        if n < view.min_size:
            return []
        if self.side is Side.BUY:
            ref = view.best_ask.price if view.best_ask else view.reference_price
            price = ref + self.p.slippage
            if view.affordable(price) < n:
                return []
        else:
            ref = view.best_bid.price if view.best_bid else view.reference_price
            price = max(1, ref - self.p.slippage)
            if view.available_shares < n:
                return []
        self.remaining -= n
        self.next_time += self.p.interval_ms
        return [Submit(self.side, price, n, quote_validity(view, self.p.life_ms))]


AGENT_TYPES: Dict[Kind, Type[Agent]] = {
    Kind.ZI: ZeroIntelligence,
    Kind.MARKET_MAKER: MarketMaker,
    Kind.MOMENTUM: Momentum,
    Kind.VALUE: Value,
    Kind.BLOCK: Block,
}


@dataclass(frozen=True)
class AgentSpec:
    id: str
    kind: Kind
    params: dict = field(default_factory=dict)
    cash: int = 0
    shares: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.cash < 0 or self.shares < 0:
            raise ValueError("endowment must be non-negative")


def make_agent(spec: AgentSpec) -> Agent:
    cls = AGENT_TYPES[spec.kind]
    known = {f.name for f in fields(cls.Params)}
    unknown = set(spec.params) - known
    if unknown:
        raise ValueError(f"unknown {spec.kind.value} params: {sorted(unknown)}")
    return cls(spec.id, cls.Params(**spec.params))
