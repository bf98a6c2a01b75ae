"""Paired A/B runs: one base scenario against an override, seed by seed."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

from .config import ScenarioConfig, apply_overrides
from .sim import RunResult, run_scenario


@dataclass(frozen=True)
class SeedComparison:
    seed: int
    base: Dict[str, Optional[float]]
    treatment: Dict[str, Optional[float]]

    def delta(self, metric: str) -> Optional[float]:
        a, b = self.base.get(metric), self.treatment.get(metric)
        if a is None or b is None:
            return None
        return b - a


@dataclass
class PairedSummary:
    """Per-seed metric deltas (treatment minus base) and their sign counts."""

    metrics: List[str]
    rows: List[SeedComparison] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.rows)

    def deltas(self, metric: str) -> List[Optional[float]]:
        return [r.delta(metric) for r in self.rows]

    def count_positive(self, metric: str) -> int:
        return sum(1 for d in self.deltas(metric) if d is not None and d > 0)

    def count_negative(self, metric: str) -> int:
        return sum(1 for d in self.deltas(metric) if d is not None and d < 0)

    def table(self) -> List[dict]:
        out = []
        for r in self.rows:
            row = {"seed": r.seed}
            for m in self.metrics:
                row[f"{m}_base"] = r.base.get(m)
                row[f"{m}_treatment"] = r.treatment.get(m)
                row[f"{m}_delta"] = r.delta(m)
            out.append(row)
        return out

    def sign_counts(self) -> List[dict]:
        return [{"metric": m, "positive": self.count_positive(m), "negative": self.count_negative(m),
                 "zero_or_missing": self.n - self.count_positive(m) - self.count_negative(m)}
                for m in self.metrics]


def compare_regimes(
    base: ScenarioConfig,
    overrides: dict,
    seeds: Sequence[int],
    runner: Callable[[ScenarioConfig, int], RunResult] = run_scenario,
) -> PairedSummary:
    """Run ``base`` and ``base + overrides`` on each seed, in seed-list order."""
    if not seeds:
        raise ValueError("seed list must not be empty")
    treatment = apply_overrides(base, overrides)
    rows = []
    metrics: List[str] = []
    for seed in seeds:
        a = runner(base, seed).summary
        b = runner(treatment, seed).summary
        if not metrics:
            metrics = list(a)
        rows.append(SeedComparison(seed, a, b))
    return PairedSummary(metrics, rows)
