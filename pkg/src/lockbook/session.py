"""Trading session schedule with opening/closing liquidity ramps.

Instead of an auction cross, the session opens with a high minimum quote
size (a multiple of NMS) or a long minimum quote lifetime and relaxes it
over the ramp. All times are milliseconds within the trading day.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .book import Fixed, Quote, Rolling

MINUTE = 60_000


class RampMode(str, Enum):
    NONE = "none"
    SIZE = "size"
    VALIDTO = "validto"


class Decay(str, Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"


class Phase(str, Enum):
    PRE_OPEN = "pre_open"
    OPENING_RAMP = "opening_ramp"
    CONTINUOUS = "continuous"
    CLOSING_RAMP = "closing_ramp"
    CLOSED = "closed"


class Rejection(str, Enum):
    TOO_SMALL = "TooSmall"
    VALIDITY_TOO_SHORT = "ValidityTooShort"
    MARKET_CLOSED = "MarketClosed"


class SessionError(Exception):
    pass


class OutsideSession(SessionError):
    pass


class NotHalted(SessionError):
    pass


@dataclass(frozen=True)
class SessionSchedule:
    open_time: int = 0
    close_time: int = 510 * MINUTE
    ramp_duration: int = 30 * MINUTE
    ramp_mode: RampMode = RampMode.NONE
    nms: int = 1
    size_multiple_start: float = 50.0
    min_validto_start: int = 5 * MINUTE
    min_validto_floor: int = 5000
    decay: Decay = Decay.LINEAR
    closing_ramp: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "ramp_mode", RampMode(self.ramp_mode))
        object.__setattr__(self, "decay", Decay(self.decay))
        length = self.close_time - self.open_time
        if length <= 0:
            raise ValueError("close_time must be after open_time")
        ramps = self.ramp_duration * (2 if self.closing_ramp else 1)
        if self.ramp_mode is not RampMode.NONE and (self.ramp_duration <= 0 or ramps > length):
            raise ValueError("ramps must be positive and fit inside the session")
        if self.nms < 1:
            raise ValueError("nms must be >= 1")
        if self.size_multiple_start < 1:
            raise ValueError("size_multiple_start must be >= 1")
        if self.min_validto_start < self.min_validto_floor or self.min_validto_floor < 0:
            raise ValueError("need min_validto_start >= min_validto_floor >= 0")

    def phase(self, t: int) -> Phase:
        if t < self.open_time:
            return Phase.PRE_OPEN
        if t >= self.close_time:
            return Phase.CLOSED
        if self.ramp_mode is not RampMode.NONE:
            if t < self.open_time + self.ramp_duration:
                return Phase.OPENING_RAMP
            if self.closing_ramp and t >= self.close_time - self.ramp_duration:
                return Phase.CLOSING_RAMP
        return Phase.CONTINUOUS

    def _ramp_position(self, t: int, mode: RampMode) -> Optional[float]:
        """Fraction of the way from the ramp's start value to its end value."""
        ph = self.phase(t)
        if ph in (Phase.PRE_OPEN, Phase.CLOSED):
            raise OutsideSession(f"t={t} outside [{self.open_time}, {self.close_time})")
        if self.ramp_mode is not mode:
            return None
        if ph is Phase.OPENING_RAMP:
            return (t - self.open_time) / self.ramp_duration
        if ph is Phase.CLOSING_RAMP:
            return (self.close_time - t) / self.ramp_duration
        return None

    def _interp(self, start: float, end: float, pos: float) -> float:
        if self.decay is Decay.LINEAR:
            return start + (end - start) * pos
        return start * (end / start) ** pos

    def min_quote_size(self, t: int) -> int:
        pos = self._ramp_position(t, RampMode.SIZE)
        if pos is None:
            return self.nms
        v = self._interp(self.size_multiple_start * self.nms, float(self.nms), pos)
        return max(self.nms, math.floor(v + 0.5))

    def min_validto(self, t: int) -> int:
        pos = self._ramp_position(t, RampMode.VALIDTO)
        if pos is None:
            return self.min_validto_floor
        if self.min_validto_floor == 0 and self.decay is Decay.EXPONENTIAL:
            raise ValueError("exponential decay needs a positive floor")
        v = self._interp(float(self.min_validto_start), float(self.min_validto_floor), pos)
        return max(self.min_validto_floor, math.floor(v + 0.5))


@dataclass(frozen=True)
class Admission:
    accepted: bool
    reason: Optional[Rejection] = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = Admission(True)


class Session:
    """Mutable wrapper around a schedule that also tracks halts."""

    def __init__(self, schedule: SessionSchedule) -> None:
        self.schedule = schedule
        self.halted_at: Optional[int] = None

    @property
    def halted(self) -> bool:
        return self.halted_at is not None

    def phase(self, t: int) -> Phase:
        return self.schedule.phase(t)

    def is_open(self, t: int) -> bool:
        return not self.halted and self.phase(t) not in (Phase.PRE_OPEN, Phase.CLOSED)

    def min_quote_size(self, t: int) -> int:
        return self.schedule.min_quote_size(t)

    def min_validto(self, t: int) -> int:
        return self.schedule.min_validto(t)

    def admit(self, quote: Quote, t: int) -> Admission:
        if not self.is_open(t):
            return Admission(False, Rejection.MARKET_CLOSED)
        if quote.volume < self.min_quote_size(t):
            return Admission(False, Rejection.TOO_SMALL)
        v = quote.validity
        life = v.expiry - t if isinstance(v, Fixed) else v.length
        if life < self.min_validto(t):
            return Admission(False, Rejection.VALIDITY_TOO_SHORT)
        return ACCEPT

    def halt(self, t: int) -> None:
        self.halted_at = t

    def restart(self, halted_at: int, t_resume: int) -> SessionSchedule:
        """Reopen a halted market with a full opening ramp starting at ``t_resume``."""
        if not self.halted:
            raise NotHalted("market is not halted")
        if t_resume < halted_at:
            raise ValueError("cannot resume before the halt")
        s = self.schedule
        ramp = s.ramp_duration
        if s.ramp_mode is not RampMode.NONE:
            room = s.close_time - t_resume - (ramp if s.closing_ramp else 0)
            ramp = min(ramp, room)
            if ramp <= 0:
                raise ValueError("no room left in the session for a restart ramp")
        self.schedule = replace(s, open_time=t_resume, ramp_duration=ramp)
        self.halted_at = None
        return self.schedule
