"""Limit order book with valid-to quote lifecycle.

Two priority regimes are supported:

* ``PRICE_TIME``: price, then arrival sequence.
* ``PRICE_VALIDTO_VOLUME``: price, then furthest effective expiry, then
  largest remaining volume, then arrival sequence.

Prices are integer ticks, volumes integer shares and times integer
milliseconds. Expiry times and rolling lengths must sit on the expiry grid.
"""

from __future__ import annotations

import bisect
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple, Union


class Side(str, Enum):
    BUY = "buy"
    SELL = "sell"

    @property
    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


class Regime(str, Enum):
    PRICE_TIME = "price_time"
    PRICE_VALIDTO_VOLUME = "price_validto_volume"


@dataclass(frozen=True)
class Fixed:
    expiry: int


@dataclass(frozen=True)
class Rolling:
    length: int


Validity = Union[Fixed, Rolling]


class BookError(Exception):
    """Base class for rejected book operations."""


class GridViolation(BookError):
    pass


class ValidityTooShort(BookError):
    pass


class SessionClosed(BookError):
    pass


class RejectedBeforeValidTo(BookError):
    pass


class UnknownQuote(BookError, KeyError):
    pass


class NotRolling(BookError):
    pass


class NotAnExtension(BookError):
    pass


class NoMid(BookError):
    pass


@dataclass
class Quote:
    side: Side
    price: int
    volume: int
    validity: Validity
    owner: str
    id: int = -1
    arrival: int = -1
    remaining: int = field(default=-1)
    submitted: int = -1

    def __post_init__(self) -> None:
        if self.remaining < 0:
            self.remaining = self.volume

    def effective_expiry(self, now: int) -> int:
        v = self.validity
        return v.expiry if isinstance(v, Fixed) else now + v.length


@dataclass(frozen=True)
class Trade:
    price: int
    volume: int
    buyer: str
    seller: str
    time: int
    aggressor: Side
    maker_quote_id: int
    taker_order_id: int
    self_trade: bool = False


@dataclass(frozen=True)
class QuoteEvent:
    """One line of the quote lifecycle log.

    ``kind`` is one of ``rest``, ``fill``, ``expire``, ``cancel``,
    ``convert``, ``extend`` or ``close``. ``remaining`` is the resting volume
    after the event.
    """

    time: int
    kind: str
    quote_id: int
    owner: str
    side: Side
    price: int
    remaining: int
    expiry: Optional[int]


@dataclass(frozen=True)
class SubmitResult:
    order_id: int
    fills: List[Trade]
    resting: Optional[int]


@dataclass(frozen=True)
class Level:
    price: int
    volume: int


@dataclass(frozen=True)
class BookSnapshot:
    """Aggregated levels at one instant, best level first on each side."""

    time: int
    bids: Tuple[Level, ...]
    asks: Tuple[Level, ...]

    @property
    def mid2(self) -> Optional[int]:
        if not self.bids or not self.asks:
            return None
        return self.bids[0].price + self.asks[0].price


def snap_up(t: int, grid: int) -> int:
    """Smallest multiple of ``grid`` that is >= ``t``."""
    return -(-t // grid) * grid


class OrderBook:
    """Single-instrument limit order book.

    ``min_validto_ms`` is the static floor on quote lifetime. A session may
    impose a larger one per submission through the ``min_validto`` argument
    of :meth:`submit`.
    """

    def __init__(
        self,
        regime: Regime = Regime.PRICE_TIME,
        expiry_grid_ms: int = 2000,
        min_validto_ms: int = 5000,
        record: bool = True,
    ) -> None:
        if expiry_grid_ms < 1:
            raise ValueError("expiry grid must be >= 1 ms")
        self.regime = Regime(regime)
        self.grid = expiry_grid_ms
        self.min_validto_ms = min_validto_ms
        self.is_open = True
        self.record = record
        self.log: List[QuoteEvent] = []
        self._quotes: Dict[int, Quote] = {}
        self._levels: Dict[Side, Dict[int, List[Quote]]] = {Side.BUY: {}, Side.SELL: {}}
        self._prices: Dict[Side, List[int]] = {Side.BUY: [], Side.SELL: []}
        # (expiry, id); stale entries are skipped on pop
        self._expiries: List[Tuple[int, int]] = []
        self._next_id = 1

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._quotes)

    def __contains__(self, quote_id: int) -> bool:
        return quote_id in self._quotes

    def get(self, quote_id: int) -> Quote:
        try:
            return self._quotes[quote_id]
        except KeyError:
            raise UnknownQuote(quote_id) from None

    def quotes(self) -> Iterator[Quote]:
        return iter(self._quotes.values())

    def best(self, side: Side) -> Optional[Level]:
        prices = self._prices[side]
        if not prices:
            return None
        p = prices[-1] if side is Side.BUY else prices[0]
        return Level(p, sum(q.remaining for q in self._levels[side][p]))

    def best_bid_ask(self) -> Tuple[Optional[Level], Optional[Level]]:
        return self.best(Side.BUY), self.best(Side.SELL)

    def levels(self, side: Side) -> List[Level]:
        """Aggregated levels, best first."""
        prices = self._prices[side]
        order = reversed(prices) if side is Side.BUY else iter(prices)
        book = self._levels[side]
        return [Level(p, sum(q.remaining for q in book[p])) for p in order]

    def snapshot(self, now: int) -> BookSnapshot:
        return BookSnapshot(now, tuple(self.levels(Side.BUY)), tuple(self.levels(Side.SELL)))

    def mid2(self) -> int:
        """Twice the mid price, kept integral."""
        bid, ask = self.best_bid_ask()
        if bid is None or ask is None:
            raise NoMid("book is one-sided")
        return bid.price + ask.price

    def depth(self, band: float) -> int:
        """Resting shares priced within ``band`` (a fraction of mid) of mid."""
        m2 = self.mid2()
        lim = band * m2
        total = 0
        for side in (Side.BUY, Side.SELL):
            for p, qs in self._levels[side].items():
                if abs(2 * p - m2) <= lim:
                    total += sum(q.remaining for q in qs)
        return total

    def priority_key(self, q: Quote, now: int) -> tuple:
        """Sort key within one price level; smaller sorts first."""
        if self.regime is Regime.PRICE_TIME:
            return (q.arrival,)
        return (-q.effective_expiry(now), -q.remaining, q.arrival)

    # -- validation --------------------------------------------------------

    def _check_validity(self, validity: Validity, now: int, floor: int) -> None:
        if isinstance(validity, Fixed):
            if validity.expiry % self.grid:
                raise GridViolation(f"expiry {validity.expiry} not on {self.grid} ms grid")
            if validity.expiry - now < floor:
                raise ValidityTooShort(
                    f"expiry {validity.expiry} is {validity.expiry - now} ms away, minimum {floor}"
                )
        elif isinstance(validity, Rolling):
            if validity.length % self.grid:
                raise GridViolation(f"rolling length {validity.length} not on {self.grid} ms grid")
            if validity.length < floor:
                raise ValidityTooShort(f"rolling length {validity.length} below minimum {floor}")
        else:
            raise TypeError(f"unknown validity {validity!r}")

    # -- mutation ----------------------------------------------------------

    def submit(self, quote: Quote, now: int, min_validto: Optional[int] = None) -> SubmitResult:
        """Match ``quote`` against the opposite side and rest any residue.

        The book assigns ``id`` and ``arrival``. Fills print at the maker's
        price.
        """
        if not self.is_open:
            raise SessionClosed("book is closed")
        if not isinstance(quote.price, int) or isinstance(quote.price, bool) or quote.price < 1:
            raise GridViolation(f"price {quote.price!r} is not a positive integer tick")
        if not isinstance(quote.volume, int) or quote.volume < 1:
            raise ValueError(f"volume {quote.volume!r} must be a positive integer")
        floor = self.min_validto_ms if min_validto is None else max(min_validto, self.min_validto_ms)
        self._check_validity(quote.validity, now, floor)

        quote.id = quote.arrival = self._next_id
        self._next_id += 1
        quote.remaining = quote.volume
        quote.submitted = now

        fills = self._match(quote, now)
        resting = None
        if quote.remaining > 0:
            self._insert(quote)
            resting = quote.id
            self._emit(now, "rest", quote)
        return SubmitResult(quote.id, fills, resting)

    def _match(self, taker: Quote, now: int) -> List[Trade]:
        side = taker.side.opposite
        prices = self._prices[side]
        book = self._levels[side]
        fills: List[Trade] = []
        buy = taker.side is Side.BUY
        while taker.remaining and prices:
            p = prices[0] if buy else prices[-1]
            if (buy and p > taker.price) or (not buy and p < taker.price):
                break
            level = book[p]
            if len(level) > 1:
                level.sort(key=lambda q: self.priority_key(q, now))
            while taker.remaining and level:
                maker = level[0]
                n = min(taker.remaining, maker.remaining)
                taker.remaining -= n
                maker.remaining -= n
                buyer, seller = (taker.owner, maker.owner) if buy else (maker.owner, taker.owner)
                fills.append(
                    Trade(p, n, buyer, seller, now, taker.side, maker.id, taker.id, buyer == seller)
                )
                if maker.remaining == 0:
                    level.pop(0)
                    del self._quotes[maker.id]
                self._emit(now, "fill", maker)
            if not level:
                del book[p]
                if buy:
                    prices.pop(0)
                else:
                    prices.pop()
        return fills

    def _insert(self, q: Quote) -> None:
        self._quotes[q.id] = q
        book = self._levels[q.side]
        level = book.get(q.price)
        if level is None:
            book[q.price] = [q]
            bisect.insort(self._prices[q.side], q.price)
        else:
            level.append(q)
        if isinstance(q.validity, Fixed):
            heapq.heappush(self._expiries, (q.validity.expiry, q.id))

    def _remove(self, q: Quote) -> None:
        del self._quotes[q.id]
        book = self._levels[q.side]
        level = book[q.price]
        level.remove(q)
        if not level:
            del book[q.price]
            prices = self._prices[q.side]
            del prices[bisect.bisect_left(prices, q.price)]

    def _emit(self, now: int, kind: str, q: Quote) -> None:
        if self.record:
            exp = q.validity.expiry if isinstance(q.validity, Fixed) else None
            self.log.append(QuoteEvent(now, kind, q.id, q.owner, q.side, q.price, q.remaining, exp))

    def cancel(self, quote_id: int, now: int) -> None:
        """Remove a resting quote whose valid-to time has been reached."""
        q = self.get(quote_id)
        if isinstance(q.validity, Rolling):
            raise RejectedBeforeValidTo("rolling quotes must be converted before cancelling")
        if now < q.validity.expiry:
            raise RejectedBeforeValidTo(f"quote {quote_id} binding until {q.validity.expiry}")
        self._remove(q)
        self._emit(now, "cancel", q)

    def convert_rolling(self, quote_id: int, now: int) -> int:
        """Fix a rolling quote's expiry at ``now + length`` snapped up to grid."""
        q = self.get(quote_id)
        if not isinstance(q.validity, Rolling):
            raise NotRolling(f"quote {quote_id} already has a fixed expiry")
        expiry = snap_up(now + q.validity.length, self.grid)
        q.validity = Fixed(expiry)
        heapq.heappush(self._expiries, (expiry, q.id))
        self._emit(now, "convert", q)
        return expiry

    def extend_validity(self, quote_id: int, new_expiry: int, now: int) -> None:
        q = self.get(quote_id)
        if not isinstance(q.validity, Fixed):
            raise NotAnExtension(f"quote {quote_id} is rolling; convert it first")
        if new_expiry <= q.validity.expiry:
            raise NotAnExtension(f"{new_expiry} does not extend {q.validity.expiry}")
        if new_expiry % self.grid:
            raise GridViolation(f"expiry {new_expiry} not on {self.grid} ms grid")
        q.validity = Fixed(new_expiry)
        heapq.heappush(self._expiries, (new_expiry, q.id))
        self._emit(now, "extend", q)

    def expire(self, now: int) -> List[int]:
        """Drop every fixed quote with expiry <= now; returns their ids."""
        heap = self._expiries
        removed = []
        while heap and heap[0][0] <= now:
            expiry, qid = heapq.heappop(heap)
            q = self._quotes.get(qid)
            if q is None or not isinstance(q.validity, Fixed) or q.validity.expiry != expiry:
                continue
            self._remove(q)
            self._emit(now, "expire", q)
            removed.append(qid)
        return removed

    def clear(self, now: int) -> List[int]:
        """Remove everything at session end or halt, rolling quotes included."""
        gone = list(self._quotes.values())
        for q in gone:
            self._remove(q)
            self._emit(now, "close", q)
        self._expiries.clear()
        return [q.id for q in gone]
