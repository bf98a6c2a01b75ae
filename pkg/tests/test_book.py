import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lockbook.book import (
    Fixed,
    GridViolation,
    NoMid,
    NotAnExtension,
    NotRolling,
    OrderBook,
    Quote,
    Regime,
    RejectedBeforeValidTo,
    Rolling,
    SessionClosed,
    Side,
    UnknownQuote,
    ValidityTooShort,
    snap_up,
)

from oracles import ReferenceMatcher, random_order_stream

T = 100_000  # an on-grid reference time

PVV = Regime.PRICE_VALIDTO_VOLUME


def q(side, price, volume, expiry=None, length=None, owner="x"):
    validity = Fixed(expiry) if length is None else Rolling(length)
    return Quote(Side(side), price, volume, validity, owner)


def tape_tuples(fills):
    return [
        (f.price, f.volume, f.buyer, f.seller, f.time, f.aggressor.value, f.maker_quote_id, f.taker_order_id)
        for f in fills
    ]


class TestSubmit:
    def test_validto_priority_example(self):
        book = OrderBook(PVV, expiry_grid_ms=1000, min_validto_ms=5000)
        a3 = book.submit(q("sell", 99, 100, T + 5000, owner="A3"), T).resting
        a1 = book.submit(q("sell", 100, 500, T + 10000, owner="A1"), T).resting
        a2 = book.submit(q("sell", 100, 300, T + 20000, owner="A2"), T).resting
        res = book.submit(q("buy", 100, 600, T + 6000, owner="B"), T)
        assert [(f.price, f.volume, f.maker_quote_id) for f in res.fills] == [
            (99, 100, a3),
            (100, 300, a2),
            (100, 200, a1),
        ]
        assert res.resting is None
        bid, ask = book.best_bid_ask()
        assert bid is None
        assert (ask.price, ask.volume) == (100, 300)
        assert book.get(a1).remaining == 300

    def test_price_time_takes_earliest_arrival(self):
        book = OrderBook(Regime.PRICE_TIME, expiry_grid_ms=1000, min_validto_ms=1000)
        first = book.submit(q("sell", 100, 10, T + 2000), T).resting
        book.submit(q("sell", 100, 50, T + 20000), T)
        res = book.submit(q("buy", 100, 10, T + 2000), T)
        assert res.fills[0].maker_quote_id == first

    def test_empty_book_rests(self):
        book = OrderBook(PVV)
        res = book.submit(q("buy", 100, 50, T + 6000), T)
        assert res.fills == []
        assert book.get(res.resting).validity.expiry >= T + book.min_validto_ms

    def test_rests_non_crossing_residue(self):
        book = OrderBook(PVV, expiry_grid_ms=1000, min_validto_ms=1000)
        book.submit(q("sell", 101, 10, T + 2000), T)
        res = book.submit(q("buy", 102, 25, T + 2000), T)
        assert sum(f.volume for f in res.fills) == 10
        assert book.get(res.resting).remaining == 15
        bid, ask = book.best_bid_ask()
        assert bid.price == 102 and ask is None

    def test_trade_prints_at_maker_price(self):
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
        book.submit(q("buy", 98, 5, T + 2000), T)
        res = book.submit(q("sell", 90, 5, T + 2000), T)
        assert res.fills[0].price == 98
        assert res.fills[0].aggressor is Side.SELL

    def test_self_trade_flagged(self):
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
        book.submit(q("buy", 98, 5, T + 2000, owner="me"), T)
        res = book.submit(q("sell", 98, 5, T + 2000, owner="me"), T)
        assert res.fills[0].self_trade

    @pytest.mark.parametrize(
        "quote, err",
        [
            (q("buy", 100, 1, T + 5001), GridViolation),
            (q("buy", 100, 1, T + 4000), ValidityTooShort),
            (q("buy", 100, 1, length=5500), GridViolation),
            (q("buy", 100, 1, length=2000), ValidityTooShort),
            (Quote(Side.BUY, 100.5, 1, Fixed(T + 6000), "x"), GridViolation),
            (Quote(Side.BUY, 0, 1, Fixed(T + 6000), "x"), GridViolation),
        ],
    )
    def test_rejections(self, quote, err):
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=5000)
        with pytest.raises(err):
            book.submit(quote, T)

    def test_session_floor_raises_minimum(self):
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=5000)
        with pytest.raises(ValidityTooShort):
            book.submit(q("buy", 100, 1, T + 6000), T, min_validto=60_000)

    def test_closed_book(self):
        book = OrderBook()
        book.is_open = False
        with pytest.raises(SessionClosed):
            book.submit(q("buy", 100, 1, T + 6000), T)

    def test_rolling_ranks_by_now_plus_length(self):
        book = OrderBook(PVV, expiry_grid_ms=1000, min_validto_ms=1000)
        fixed = book.submit(q("sell", 100, 10, T + 8000), T).resting
        rolling = book.submit(q("sell", 100, 10, length=5000), T).resting
        # at T rolling reaches T+5000 < T+8000
        assert book.submit(q("buy", 100, 1, T + 2000), T).fills[0].maker_quote_id == fixed
        # at T+4000 rolling reaches T+9000 > T+8000
        assert book.submit(q("buy", 100, 1, T + 6000), T + 4000).fills[0].maker_quote_id == rolling

    def test_longer_rolling_wins(self):
        book = OrderBook(PVV, expiry_grid_ms=1000, min_validto_ms=1000)
        book.submit(q("sell", 100, 10, length=3000), T)
        long_ = book.submit(q("sell", 100, 10, length=7000), T).resting
        assert book.submit(q("buy", 100, 1, T + 2000), T).fills[0].maker_quote_id == long_

    def test_volume_tiebreak_uses_remaining(self):
        book = OrderBook(PVV, expiry_grid_ms=1000, min_validto_ms=1000)
        big = book.submit(q("sell", 100, 50, T + 5000), T).resting
        small = book.submit(q("sell", 100, 40, T + 5000), T).resting
        assert book.submit(q("buy", 100, 20, T + 2000), T).fills[0].maker_quote_id == big
        # big now has 30 remaining < 40
        assert book.submit(q("buy", 100, 1, T + 2000), T).fills[0].maker_quote_id == small


class TestCancel:
    def test_before_validto_rejected(self):
        book = OrderBook(expiry_grid_ms=1000)
        qid = book.submit(q("buy", 100, 1, T + 10000), T).resting
        with pytest.raises(RejectedBeforeValidTo):
            book.cancel(qid, T + 4000)

    def test_at_validto_removed(self):
        book = OrderBook(expiry_grid_ms=1000)
        qid = book.submit(q("buy", 100, 1, T + 10000), T).resting
        book.cancel(qid, T + 10000)
        assert qid not in book

    def test_rolling_never_cancellable(self):
        book = OrderBook(expiry_grid_ms=1000)
        qid = book.submit(q("buy", 100, 1, length=6000), T).resting
        for t in (T, T + 10**6, T + 10**9):
            with pytest.raises(RejectedBeforeValidTo):
                book.cancel(qid, t)

    def test_unknown(self):
        with pytest.raises(UnknownQuote):
            OrderBook().cancel(42, T)


class TestConvertExtend:
    def test_convert_same_length(self):
        book = OrderBook(expiry_grid_ms=2000)
        qid = book.submit(q("buy", 100, 1, length=10000), T).resting
        assert book.convert_rolling(qid, T) == T + 10000
        assert book.get(qid).validity == Fixed(T + 10000)

    def test_convert_snaps_up(self):
        book = OrderBook(expiry_grid_ms=2000)
        qid = book.submit(q("buy", 100, 1, length=10000), T).resting
        exp = book.convert_rolling(qid, T + 300)
        assert exp == T + 12000
        assert exp % 2000 == 0 and exp >= T + 10300

    def test_convert_fixed(self):
        book = OrderBook(expiry_grid_ms=2000)
        qid = book.submit(q("buy", 100, 1, T + 6000), T).resting
        with pytest.raises(NotRolling):
            book.convert_rolling(qid, T)

    def test_converted_quote_expires(self):
        book = OrderBook(expiry_grid_ms=2000)
        qid = book.submit(q("buy", 100, 1, length=10000), T).resting
        book.convert_rolling(qid, T)
        assert book.expire(T + 9999) == []
        assert book.expire(T + 10000) == [qid]

    def test_extension_reorders(self):
        book = OrderBook(PVV, expiry_grid_ms=2000, min_validto_ms=2000)
        ten = book.submit(q("sell", 100, 10, T + 10000), T).resting
        six = book.submit(q("sell", 100, 10, T + 6000), T).resting
        book.extend_validity(six, T + 20000, T)
        assert book.submit(q("buy", 100, 1, T + 2000), T).fills[0].maker_quote_id == six
        assert ten in book

    def test_extend_not_extension(self):
        book = OrderBook(expiry_grid_ms=2000)
        qid = book.submit(q("sell", 100, 10, T + 6000), T).resting
        with pytest.raises(NotAnExtension):
            book.extend_validity(qid, T + 6000, T)

    def test_extend_off_grid(self):
        book = OrderBook(expiry_grid_ms=2000)
        qid = book.submit(q("sell", 100, 10, T + 6000), T).resting
        with pytest.raises(GridViolation):
            book.extend_validity(qid, T + 7000, T)

    def test_extended_quote_survives_old_expiry(self):
        book = OrderBook(expiry_grid_ms=2000)
        qid = book.submit(q("sell", 100, 10, T + 6000), T).resting
        book.extend_validity(qid, T + 20000, T)
        assert book.expire(T + 6000) == []
        with pytest.raises(RejectedBeforeValidTo):
            book.cancel(qid, T + 6000)


class TestExpire:
    def test_removes_due_only(self):
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
        a = book.submit(q("buy", 90, 1, T + 2000), T).resting
        b = book.submit(q("buy", 91, 1, T + 4000), T).resting
        assert book.expire(T + 3000) == [a]
        assert b in book

    def test_idempotent(self):
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
        book.submit(q("buy", 90, 1, T + 2000), T)
        assert len(book.expire(T + 2000)) == 1
        assert book.expire(T + 2000) == []

    def test_rolling_untouched(self):
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
        r = book.submit(q("buy", 90, 1, length=2000), T).resting
        assert book.expire(T + 10**9) == []
        assert r in book

    def test_random_vs_scan(self):
        rng = random.Random(7)
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
        expiry = {}
        for _ in range(1000):
            side = rng.choice(["buy", "sell"])
            # keep sides apart so nothing trades
            price = rng.randint(1, 50) if side == "buy" else rng.randint(60, 110)
            if rng.random() < 0.1:
                qid = book.submit(q(side, price, 1, length=5000), T).resting
                expiry[qid] = None
            else:
                e = T + 1000 * rng.randint(1, 300)
                qid = book.submit(q(side, price, 1, e), T).resting
                expiry[qid] = e
        alive = set(expiry)
        now = T
        while now < T + 310_000:
            now += rng.randint(1, 5000)
            due = {i for i in alive if expiry[i] is not None and expiry[i] <= now}
            assert set(book.expire(now)) == due
            alive -= due
            assert {x.id for x in book.quotes()} == alive


class TestDepth:
    def test_band(self):
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
        book.submit(q("buy", 99, 100, T + 2000), T)
        book.submit(q("sell", 101, 100, T + 2000), T)
        assert book.depth(0.02) == 200
        assert book.depth(0.0) == 0

    def test_no_mid(self):
        book = OrderBook()
        with pytest.raises(NoMid):
            book.depth(0.01)

    @given(st.integers(0, 10_000), st.floats(0, 0.2))
    @settings(max_examples=60, deadline=None)
    def test_random_vs_scan(self, seed, band):
        rng = random.Random(seed)
        book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
        rows = []
        for _ in range(40):
            if rng.random() < 0.5:
                p, side = rng.randint(80, 99), "buy"
            else:
                p, side = rng.randint(101, 120), "sell"
            v = rng.randint(1, 50)
            book.submit(q(side, p, v, T + 2000), T)
            rows.append((p, v))
        if book.best(Side.BUY) is None or book.best(Side.SELL) is None:
            return
        mid = (max(p for p, _ in rows if p < 100) + min(p for p, _ in rows if p > 100)) / 2
        expected = sum(v for p, v in rows if abs(p - mid) <= band * mid + 1e-9)
        assert book.depth(band) == expected


def test_best_bid_ask():
    book = OrderBook(expiry_grid_ms=1000, min_validto_ms=1000)
    assert book.best_bid_ask() == (None, None)
    book.submit(q("buy", 99, 3, T + 2000), T)
    book.submit(q("sell", 101, 4, T + 2000), T)
    bid, ask = book.best_bid_ask()
    assert (bid.price, bid.volume, ask.price, ask.volume) == (99, 3, 101, 4)


def test_snap_up():
    assert snap_up(0, 2000) == 0
    assert snap_up(1, 2000) == 2000
    assert snap_up(4000, 2000) == 4000


def _replay(regime, seed, n):
    book = OrderBook(regime, expiry_grid_ms=2000, min_validto_ms=4000)
    ref = ReferenceMatcher(regime.value)
    got, want = [], []
    for now, side, price, volume, owner, expiry, length in random_order_stream(seed, n):
        assert sorted(book.expire(now)) == ref.expire(now)
        validity = Fixed(expiry) if expiry is not None else Rolling(length)
        res = book.submit(Quote(Side(side), price, volume, validity, owner), now)
        got.extend(tape_tuples(res.fills))
        want.extend(ref.submit(side, price, volume, owner, expiry, length, now))
    return got, want


@pytest.mark.parametrize("regime", list(Regime))
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_matches_reference_matcher(regime, seed):
    got, want = _replay(regime, seed, 2000)
    assert len(got) > 500
    assert got == want


@given(st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_pvv_fill_order_property(seed):
    """Within one price, fills walk non-increasing expiry, then volume, then arrival."""
    rng = random.Random(seed)
    book = OrderBook(PVV, expiry_grid_ms=1000, min_validto_ms=1000)
    for _ in range(rng.randint(2, 25)):
        book.submit(q("sell", 100, rng.randint(1, 5), T + 1000 * rng.randint(1, 4)), T)
    snapshot = {x.id: (x.validity.expiry, x.remaining, x.arrival) for x in book.quotes()}
    fills = book.submit(q("buy", 100, 10**6, T + 1000), T).fills
    keys = [snapshot[f.maker_quote_id] for f in fills]
    assert len(keys) == len(snapshot)
    ranked = [(-e, -v, a) for e, v, a in keys]
    assert ranked == sorted(ranked)
