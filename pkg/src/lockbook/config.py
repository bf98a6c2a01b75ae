"""Scenario configuration.

Scenarios are YAML (or JSON) documents with an explicit ``schema_version``.
Unknown keys are errors so that typos cannot silently change an experiment.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .agents import AGENT_TYPES, Kind
from .book import Regime
from .registry import LockPolicy
from .session import MINUTE, Decay, RampMode, SessionSchedule

SCHEMA_VERSION = 1
OVERRIDABLE = frozenset({"regime", "lock", "session"})


class ConfigInvalid(ValueError):
    """Raised with a dotted field path for every offending entry."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AssetConfig(_Strict):
    issuer: str = "ACME"
    initial_value: int = Field(1000, ge=1, description="fundamental value at t=0, in ticks")
    tick_value: int = Field(1, ge=1, description="currency units per tick")


class BookConfig(_Strict):
    expiry_grid_ms: int = Field(2000, ge=1)


class LockConfig(_Strict):
    enabled: bool = True
    haircut_rate: float = Field(0.10, ge=0, le=1)
    daily_unlock_rate: float = Field(0.01, gt=0, lt=1)
    trading_days_per_year: int = Field(250, ge=1)
    cap_days: Optional[int] = Field(None, ge=1)

    def policy(self) -> LockPolicy:
        return LockPolicy(self.enabled, self.haircut_rate, self.daily_unlock_rate,
                          self.trading_days_per_year, self.cap_days)


class HaltConfig(_Strict):
    day: int = Field(ge=0)
    at_ms: int = Field(ge=0)
    resume_ms: int = Field(ge=0)

    @model_validator(mode="after")
    def _order(self):
        if self.resume_ms <= self.at_ms:
            raise ValueError("resume_ms must be after at_ms")
        return self


class SessionConfig(_Strict):
    day_length_ms: int = Field(510 * MINUTE, ge=1)
    open_ms: int = Field(0, ge=0)
    close_ms: Optional[int] = None
    ramp_mode: RampMode = RampMode.NONE
    ramp_duration_ms: int = Field(30 * MINUTE, ge=1)
    nms: int = Field(1, ge=1)
    size_multiple_start: float = Field(50.0, ge=1)
    min_validto_start_ms: int = Field(5 * MINUTE, ge=0)
    min_validto_floor_ms: int = Field(5000, ge=0)
    decay: Decay = Decay.LINEAR
    closing_ramp: bool = False
    halts: List[HaltConfig] = []

    @model_validator(mode="after")
    def _fits(self):
        close = self.close
        if close > self.day_length_ms:
            raise ValueError("close_ms must be within the day")
        self.schedule(0)
        for h in self.halts:
            if not self.open_ms <= h.at_ms < close or h.resume_ms >= close:
                raise ValueError("halts must lie inside the session")
        return self

    @property
    def close(self) -> int:
        return self.day_length_ms if self.close_ms is None else self.close_ms

    def schedule(self, day_start: int) -> SessionSchedule:
        return SessionSchedule(
            open_time=day_start + self.open_ms,
            close_time=day_start + self.close,
            ramp_duration=self.ramp_duration_ms,
            ramp_mode=self.ramp_mode,
            nms=self.nms,
            size_multiple_start=self.size_multiple_start,
            min_validto_start=self.min_validto_start_ms,
            min_validto_floor=self.min_validto_floor_ms,
            decay=self.decay,
            closing_ramp=self.closing_ramp,
        )


class FundamentalConfig(_Strict):
    jump_rate_per_day: float = Field(0.2, ge=0)
    jump_sigma: float = Field(0.02, ge=0)


class SimulationConfig(_Strict):
    horizon_days: int = Field(1, ge=1)
    poll_ms: int = Field(100, ge=1)
    snapshot_ms: int = Field(1000, ge=1)
    # default: half a poll interval, so snapshots see the book between polls
    snapshot_offset_ms: Optional[int] = Field(None, ge=0)
    snapshot_levels: int = Field(20, ge=1)
    recent_trades: int = Field(64, ge=2)


    @property
    def snapshot_offset(self) -> int:
        return self.poll_ms // 2 if self.snapshot_offset_ms is None else self.snapshot_offset_ms


class MetricsConfig(_Strict):
    window_ms: int = Field(60_000, ge=1)
    band: float = Field(0.01, ge=0)
    lag: int = Field(1, ge=1)
    index_weights: Optional[Dict[Literal["quoted_spread", "amihud", "depth_band", "trade_volume"], float]] = None


class AgentGroup(_Strict):
    kind: Kind
    count: int = Field(1, ge=0)
    id_prefix: Optional[str] = None
    cash: int = Field(0, ge=0)
    shares: int = Field(0, ge=0)
    params: Dict[str, Any] = {}

    @model_validator(mode="after")
    def _params(self):
        cls = AGENT_TYPES[self.kind]
        try:
            cls.Params(**self.params)
        except TypeError as exc:
            raise ValueError(f"bad {self.kind.value} params: {exc}") from None
        return self

    @property
    def prefix(self) -> str:
        return self.id_prefix if self.id_prefix is not None else self.kind.value


class ScenarioConfig(_Strict):
    schema_version: Literal[1]
    name: str = "scenario"
    seed: int = Field(0, ge=0)
    asset: AssetConfig = AssetConfig()
    regime: Regime = Regime.PRICE_TIME
    book: BookConfig = BookConfig()
    lock: LockConfig = LockConfig()
    session: SessionConfig = SessionConfig()
    fundamental: FundamentalConfig = FundamentalConfig()
    simulation: SimulationConfig = SimulationConfig()
    metrics: MetricsConfig = MetricsConfig()
    agents: List[AgentGroup] = []

    @model_validator(mode="after")
    def _unique_ids(self):
        ids = [gid for gid, _ in self.agent_specs()]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate agent ids {dupes[:5]}")
        return self

    def agent_specs(self):
        """(agent id, group) pairs in declaration order."""
        out = []
        for g in self.agents:
            out += [(f"{g.prefix}{k}", g) for k in range(g.count)]
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: Any) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid("<root>: expected a mapping")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigInvalid(_format(exc)) from None


def read_document(path: str | Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalid(f"{path}: cannot read: {exc.strerror or exc}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"{path}: not valid YAML/JSON: {exc}") from None


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(read_document(path))


def deep_merge(base: dict, patch: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in patch.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_overrides(cfg: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    """Return ``cfg`` with ``overrides`` merged in; only regime/lock/session may change."""
    if not isinstance(overrides, dict):
        raise ConfigInvalid("overrides: expected a mapping")
    bad = sorted(set(overrides) - OVERRIDABLE)
    if bad:
        raise ConfigInvalid(f"overrides.{bad[0]}: only {sorted(OVERRIDABLE)} may be overridden")
    return parse_config(deep_merge(cfg.model_dump(mode="json"), overrides))
