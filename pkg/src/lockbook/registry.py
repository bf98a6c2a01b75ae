"""Share ledger with locked shares, random daily unlocks and resale haircuts.

Shares bought in a trade are locked. Each trading day a fraction of the
issuer's locked shares, drawn uniformly at random, are unlocked; lots older
than the cap are unlocked unconditionally. Selling a locked share costs a
flat haircut on its sale price, paid to the issuer's treasury.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .book import Trade


class RegistryError(Exception):
    pass


class InsufficientHoldings(RegistryError):
    pass


class CalledTwiceSameDay(RegistryError):
    pass


@dataclass(frozen=True)
class LockPolicy:
    enabled: bool = True
    haircut_rate: float = 0.10
    daily_unlock_rate: float = 0.01
    trading_days_per_year: int = 250
    cap_days: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0 <= self.haircut_rate <= 1:
            raise ValueError("haircut_rate must be in [0, 1]")
        if not 0 < self.daily_unlock_rate < 1:
            raise ValueError("daily_unlock_rate must be in (0, 1)")
        if self.cap_days is None:
            object.__setattr__(self, "cap_days", 3 * self.trading_days_per_year)
        if self.cap_days < 1:
            raise ValueError("cap_days must be positive")


@dataclass
class ShareLot:
    owner: str
    issuer: str
    count: int
    lock_day: Optional[int]
    seq: int = 0

    @property
    def locked(self) -> bool:
        return self.lock_day is not None


@dataclass(frozen=True)
class Holdings:
    locked: int
    unlocked: int
    lots: Tuple[ShareLot, ...]

    @property
    def total(self) -> int:
        return self.locked + self.unlocked


@dataclass(frozen=True)
class Settlement:
    day: int
    issuer: str
    buyer: str
    seller: str
    price: int
    volume: int
    notional: int
    haircut: int
    locked_sold: int
    unlocked_sold: int

    @property
    def buyer_cash(self) -> int:
        return -self.notional

    @property
    def seller_cash(self) -> int:
        return self.notional - self.haircut


def round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def expected_locked_fraction(n: int, r: float, cap_days: Optional[int] = None) -> float:
    """Closed-form locked fraction after ``n`` daily unlock draws at rate ``r``.

    With ``cap_days`` given, the forced unlock at the cap zeroes the result
    for ``n >= cap_days``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if cap_days is not None and n >= cap_days:
        return 0.0
    return (1.0 - r) ** n


def rate_for_half_life(days: float) -> float:
    """Daily unlock rate whose locked fraction halves after ``days`` draws."""
    return 1.0 - 0.5 ** (1.0 / days)


class Registry:
    """Per-issuer share ledger.

    ``rng`` should be a stream reserved for the registry so that unlock draws
    do not depend on anything else in the simulation.
    """

    def __init__(
        self,
        policy: LockPolicy,
        rng: np.random.Generator,
        tick_value: int = 1,
        day_rng: Optional[Callable[[str, int], np.random.Generator]] = None,
    ) -> None:
        self.policy = policy
        self.rng = rng
        # optional per-(issuer, day) generator; keeps each day's draws fixed
        # regardless of how many variates earlier days consumed
        self.day_rng = day_rng
        self.tick_value = tick_value
        self._rate = Fraction(str(policy.daily_unlock_rate))
        self._haircut = Fraction(str(policy.haircut_rate))
        self._unlocked: Dict[Tuple[str, str], int] = defaultdict(int)
        self._locked: Dict[Tuple[str, str], List[ShareLot]] = defaultdict(list)
        self._nlocked: Dict[Tuple[str, str], int] = defaultdict(int)
        self.treasury: Dict[str, int] = defaultdict(int)
        self.haircuts: Dict[str, int] = defaultdict(int)
        self._last_unlock: Dict[str, int] = {}
        self._forced_through: Dict[str, int] = {}
        self._seq = 0
        # (issuer, day, locked_before, unlocked_count)
        # (issuer, day, locked_before, unlocked_count, coin)
        self.unlock_log: List[Tuple[str, int, int, int, float]] = []

    # -- setup and queries ---------------------------------------------------

    def issue(self, owner: str, issuer: str, count: int, locked_day: Optional[int] = None) -> None:
        """Credit ``owner`` with shares outside of trading (initial endowment)."""
        if count < 0:
            raise ValueError("count must be >= 0")
        if count == 0:
            return
        if locked_day is None:
            self._unlocked[owner, issuer] += count
        else:
            self._add_locked(owner, issuer, count, locked_day)

    def _add_locked(self, owner: str, issuer: str, count: int, day: int) -> None:
        self._seq += 1
        self._locked[owner, issuer].append(ShareLot(owner, issuer, count, day, self._seq))
        self._nlocked[owner, issuer] += count

    def counts(self, owner: str, issuer: str) -> Tuple[int, int]:
        """(locked, unlocked) without building the lot list."""
        return self._nlocked.get((owner, issuer), 0), self._unlocked.get((owner, issuer), 0)

    def holdings(self, owner: str, issuer: str) -> Holdings:
        """Locked and unlocked counts; ``lots`` lists locked lots then one unlocked lot."""
        lots = tuple(self._locked.get((owner, issuer), ()))
        unlocked = self._unlocked.get((owner, issuer), 0)
        if unlocked:
            lots += (ShareLot(owner, issuer, unlocked, None),)
        return Holdings(sum(l.count for l in lots if l.locked), unlocked, lots)

    def owners(self, issuer: str) -> List[str]:
        keys = {o for (o, i) in self._unlocked if i == issuer}
        keys |= {o for (o, i), lots in self._locked.items() if i == issuer and lots}
        return sorted(keys)

    def locked_lots(self, issuer: str) -> List[ShareLot]:
        """All locked lots of ``issuer`` in deterministic (owner, seq) order."""
        out = []
        for (o, i) in sorted(self._locked):
            if i == issuer:
                out.extend(self._locked[o, i])
        return out

    def locked_total(self, issuer: str) -> int:
        return sum(l.count for l in self.locked_lots(issuer))

    def total_shares(self, issuer: str) -> int:
        unlocked = sum(c for (o, i), c in self._unlocked.items() if i == issuer)
        return unlocked + self.locked_total(issuer)

    # -- operations ------------------------------------------------------------

    def settle_trade(self, trade: Trade, issuer: str, today: int) -> Settlement:
        """Move shares from seller to buyer and charge any haircut.

        Unlocked shares are sold first, then locked lots oldest first. The
        buyer receives a new lot locked on ``today`` (unlocked when the
        mechanism is disabled).
        """
        self.force_unlock(today, issuer)
        seller, buyer, n = trade.seller, trade.buyer, trade.volume
        locked, unlocked = self.counts(seller, issuer)
        if locked + unlocked < n:
            raise InsufficientHoldings(f"{seller} holds {locked + unlocked} of {issuer}, sells {n}")

        from_unlocked = min(n, unlocked)
        from_locked = n - from_unlocked
        self._unlocked[seller, issuer] -= from_unlocked
        self._nlocked[seller, issuer] -= from_locked
        lots = self._locked[seller, issuer]
        todo = from_locked
        while todo:
            lot = lots[0]
            take = min(todo, lot.count)
            lot.count -= take
            todo -= take
            if lot.count == 0:
                lots.pop(0)

        notional = trade.price * self.tick_value * n
        haircut = 0
        if self.policy.enabled and from_locked:
            haircut = round_half_up(self._haircut * trade.price * self.tick_value * from_locked)
            self.treasury[issuer] += haircut
            self.haircuts[issuer] += haircut

        if self.policy.enabled:
            self._add_locked(buyer, issuer, n, today)
        else:
            self._unlocked[buyer, issuer] += n
        return Settlement(
            today, issuer, buyer, seller, trade.price, n, notional, haircut, from_locked, from_unlocked
        )

    def daily_unlock(self, today: int, issuer: str) -> int:
        """Unlock a uniformly random ``r`` share of the issuer's locked shares.

        The count is ``floor(r * L)`` plus one with probability
        ``frac(r * L)``, so the expected count is exactly ``r * L``.
        """
        if self._last_unlock.get(issuer) == today:
            raise CalledTwiceSameDay(f"{issuer} already unlocked on day {today}")
        self._last_unlock[issuer] = today
        lots = self.locked_lots(issuer)
        total = sum(l.count for l in lots)
        target = self._rate * total
        base = math.floor(target)
        rng = self.rng if self.day_rng is None else self.day_rng(issuer, today)
        # always consume the coin so the stream advances one draw per call
        coin = float(rng.random())
        k = base + (1 if coin < float(target - base) else 0)
        self.unlock_log.append((issuer, today, total, k, coin))
        if k == 0:
            return 0
        counts = np.array([l.count for l in lots], dtype=np.int64)
        picks = rng.multivariate_hypergeometric(counts, k)
        for lot, m in zip(lots, picks.tolist()):
            if m:
                lot.count -= m
                self._nlocked[lot.owner, issuer] -= m
                self._unlocked[lot.owner, issuer] += m
        self._prune(issuer)
        return k

    def force_unlock(self, today: int, issuer: Optional[str] = None) -> int:
        """Unlock every lot whose age has reached the cap. Idempotent per day."""
        cap = self.policy.cap_days
        issuers = [issuer] if issuer is not None else sorted({i for (_, i) in self._locked})
        freed = 0
        for i in issuers:
            if self._forced_through.get(i, -1) >= today:
                continue
            self._forced_through[i] = today
            for (o, li), lots in self._locked.items():
                if li != i:
                    continue
                keep = []
                for lot in lots:
                    if today - lot.lock_day >= cap:
                        self._unlocked[o, i] += lot.count
                        self._nlocked[o, i] -= lot.count
                        freed += lot.count
                    else:
                        keep.append(lot)
                lots[:] = keep
        return freed

    def _prune(self, issuer: str) -> None:
        for (o, i), lots in self._locked.items():
            if i == issuer:
                lots[:] = [l for l in lots if l.count]

    def snapshot(self, day: int) -> List[dict]:
        """End-of-day rows: one per (owner, issuer) with any shares."""
        issuers = sorted({i for (_, i) in self._unlocked} | {i for (_, i) in self._locked})
        rows = []
        for i in issuers:
            for o in self.owners(i):
                h = self.holdings(o, i)
                rows.append(
                    {"day": day, "owner": o, "issuer": i, "locked": h.locked,
                     "unlocked": h.unlocked, "treasury": self.treasury.get(i, 0)}
                )
        return rows
