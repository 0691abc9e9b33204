"""Scenario costs, strategy ranking and break-even prevalence."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.config import CHUNK_SIZE, HISTOGRAM_BINS, MIN_RISK_SAMPLES, NO_ANOMALY
from src.cost_model import CostConfig, draw_failure_costs, expected_failure_cost, failure_cost_for
from src.reliability import ReliabilityPosterior, posterior_mean
from src.rng import STREAM_FAILURE_COST, STREAM_RELIABILITY, dirichlet_rows, map_chunks, substream
from utils.custom_exception import InputError
from utils.logger import get_logger

logger = get_logger(__name__)

FAILURE_COST_MODES = ("sampled", "expected")


class StrategyKind(str, Enum):
    MANUAL = "manual"
    AUTOMATED = "automated"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class Strategy:
    """Decision rule applied to each model output."""

    kind: StrategyKind
    escalation_set: Tuple[str, ...] = ()
    label: Optional[str] = None

    def __post_init__(self):
        try:
            kind = StrategyKind(self.kind)
        except ValueError:
            raise InputError(f"unknown strategy {self.kind!r}; expected one of {[k.value for k in StrategyKind]}")
        escalation = tuple(self.escalation_set)
        if kind is StrategyKind.HYBRID and not escalation:
            raise InputError("a hybrid strategy needs a non-empty escalation set")
        if kind is not StrategyKind.HYBRID and escalation:
            raise InputError(f"only hybrid strategies escalate outputs, got escalation set for {kind.value}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "escalation_set", escalation)

    @property
    def name(self) -> str:
        return self.label or self.kind.value

    @classmethod
    def manual(cls) -> "Strategy":
        return cls(StrategyKind.MANUAL)

    @classmethod
    def automated(cls) -> "Strategy":
        return cls(StrategyKind.AUTOMATED)

    @classmethod
    def hybrid(cls, escalation_set: Sequence[str], label: Optional[str] = None) -> "Strategy":
        return cls(StrategyKind.HYBRID, tuple(escalation_set), label)

    def to_dict(self) -> Dict:
        return {"name": self.name, "kind": self.kind.value, "escalation_set": list(self.escalation_set)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Strategy":
        name = data.get("name")
        return cls(data["kind"], tuple(data.get("escalation_set") or ()),
                   None if name in (None, data["kind"]) else name)


def default_strategies(cfg: CostConfig) -> Tuple[Strategy, ...]:
    """Manual, automated and hybrid, in declaration order."""
    return Strategy.manual(), Strategy.automated(), Strategy.hybrid(cfg.escalation_set)


@dataclass(frozen=True)
class OutcomeCost:
    true_state: str
    model_output: str
    strategy: Strategy
    cost: float

    def __post_init__(self):
        if not self.cost >= 0:
            raise InputError(f"outcome cost must be non-negative, got {self.cost}")


def _outcome_terms(s: str, m_o: str, strat: Strategy, cfg: CostConfig) -> Tuple[float, bool]:
    """Fixed cost of (s, m_o) under ``strat`` and whether the unrepaired-failure cost applies."""
    cfg.check_label(s)
    cfg.check_label(m_o)
    for label in strat.escalation_set:
        if label not in cfg.anomaly_classes:
            raise InputError(f"escalation label {label!r} is not an anomaly class")

    none = cfg.no_anomaly
    if strat.kind is StrategyKind.MANUAL or (strat.kind is StrategyKind.HYBRID and m_o in strat.escalation_set):
        # Perfect manual review finds the true state and repairs it
        return cfg.manual_evaluation_cost + cfg.repair(s), False
    if m_o == none:
        return 0.0, s != none
    if m_o == s:
        return cfg.repair(s), False
    if s == none:
        return cfg.repair(m_o), False
    # Wrong anomaly repaired first, then the real one
    return cfg.repair(m_o) + cfg.repair(s), False


def outcome_cost(s: str, m_o: str, strat: Strategy, cfg: CostConfig, c_fail_draw: float) -> float:
    fixed, fails = _outcome_terms(s, m_o, strat, cfg)
    return fixed + failure_cost_for(s, c_fail_draw, cfg) if fails else fixed


def outcome(s: str, m_o: str, strat: Strategy, cfg: CostConfig, c_fail_draw: float) -> OutcomeCost:
    return OutcomeCost(s, m_o, strat, outcome_cost(s, m_o, strat, cfg, c_fail_draw))


def _check_labels(rel: ReliabilityPosterior, cfg: CostConfig) -> None:
    if set(rel.classes) != set(cfg.labels):
        raise InputError(
            f"reliability classes {list(rel.classes)} do not match cost-configuration classes {list(cfg.labels)}"
        )


def cost_vectors(s: str, strat: Strategy, rel: ReliabilityPosterior,
                 cfg: CostConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Per-output fixed cost and failure-cost coefficient, in posterior class order."""
    _check_labels(rel, cfg)
    fixed = np.zeros(rel.k)
    coef = np.zeros(rel.k)
    for j, m_o in enumerate(rel.classes):
        fixed[j], fails = _outcome_terms(s, m_o, strat, cfg)
        if fails:
            coef[j] = cfg.failure_multiplier[s]
    return fixed, coef


def closed_form_cost(s: str, strat: Strategy, cfg: CostConfig) -> Optional[float]:
    """Exact cost when it does not depend on the model output (manual review), else None."""
    if strat.kind is StrategyKind.MANUAL:
        return cfg.manual_evaluation_cost + cfg.repair(s)
    return None


def oracle_scenario_risk(s: str, strat: Strategy, rel: ReliabilityPosterior, cfg: CostConfig) -> float:
    """Deterministic cross-check: posterior-mean theta and analytic E[C_fail] substituted."""
    fixed, coef = cost_vectors(s, strat, rel, cfg)
    theta = posterior_mean(rel)[rel.index(s)]
    return float(theta @ (fixed + coef * expected_failure_cost(cfg.mixture)))


def scenario_cost_samples(s: str, strategies: Sequence[Strategy], rel: ReliabilityPosterior, cfg: CostConfig,
                          n: int, seed: int, threads: int = 1, failure_cost_mode: str = "sampled",
                          chunk_size: int = CHUNK_SIZE) -> np.ndarray:
    """Per-sample scenario cost of every strategy, shape ``(n, len(strategies))``.

    All strategies see the same theta and C_fail draws (common random numbers).
    Manual columns hold the exact closed-form constant.
    """
    if failure_cost_mode not in FAILURE_COST_MODES:
        raise InputError(f"failure_cost_mode must be one of {FAILURE_COST_MODES}, got {failure_cost_mode!r}")
    i = rel.index(s)
    vectors = [cost_vectors(s, strat, rel, cfg) for strat in strategies]
    fixed = np.stack([f for f, _ in vectors], axis=1)
    coef = np.stack([c for _, c in vectors], axis=1)
    alpha = rel.posterior_alpha[i]
    mean_c = expected_failure_cost(cfg.mixture)
    needs_failure = bool(np.any(coef))

    def draw(chunk: int, size: int) -> np.ndarray:
        theta = dirichlet_rows(substream(seed, STREAM_RELIABILITY, i, chunk), alpha, size)
        costs = theta @ fixed
        if needs_failure:
            if failure_cost_mode == "sampled":
                c, _ = draw_failure_costs(cfg.mixture, substream(seed, STREAM_FAILURE_COST, i, chunk), size)
            else:
                c = np.full(size, mean_c)
            costs += (theta @ coef) * c[:, np.newaxis]
        return costs

    samples = np.concatenate(map_chunks(draw, n, threads, chunk_size), axis=0)
    for m, strat in enumerate(strategies):
        exact = closed_form_cost(s, strat, cfg)
        if exact is not None:
            samples[:, m] = exact
    return samples


@dataclass(frozen=True)
class RiskCell:
    mean: float
    stderr: float
    n: int

    def to_dict(self) -> Dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


def _summarise(values: np.ndarray) -> RiskCell:
    n = int(values.shape[0])
    if n > 1:
        stderr = float(np.std(values, ddof=1) / math.sqrt(n))
    else:
        stderr = 0.0
    return RiskCell(float(np.mean(values)), stderr, n)


def risk_cell(s: str, strat: Strategy, cfg: CostConfig, values: np.ndarray) -> RiskCell:
    exact = closed_form_cost(s, strat, cfg)
    if exact is not None:
        return RiskCell(float(exact), 0.0, int(values.shape[0]))
    return _summarise(values)


def _check_samples(strategies: Sequence[Strategy], n: int) -> None:
    if any(strat.kind is not StrategyKind.MANUAL for strat in strategies) and n < MIN_RISK_SAMPLES:
        raise InputError(f"at least {MIN_RISK_SAMPLES} Monte Carlo samples are required, got {n}")


def scenario_risk(s: str, strat: Strategy, rel: ReliabilityPosterior, cfg: CostConfig, n: int, seed: int,
                  threads: int = 1, failure_cost_mode: str = "sampled") -> Tuple[float, float]:
    """Monte Carlo (mean, stderr) of the expected cost of ``strat`` when the true state is ``s``."""
    exact = closed_form_cost(s, strat, cfg)
    if exact is not None:
        _check_labels(rel, cfg)
        rel.index(s)
        return float(exact), 0.0
    _check_samples([strat], n)
    samples = scenario_cost_samples(s, [strat], rel, cfg, n, seed, threads, failure_cost_mode)
    cell = _summarise(samples[:, 0])
    return cell.mean, cell.stderr


@dataclass
class StrategyRiskTable:
    """Per-(scenario, strategy) expected cost with Monte Carlo uncertainty."""

    scenarios: Tuple[str, ...]
    strategies: Tuple[Strategy, ...]
    cells: Dict[Tuple[str, str], RiskCell]
    no_anomaly: str = NO_ANOMALY
    seed: Optional[int] = None
    samples: Dict[Tuple[str, str], np.ndarray] = field(default_factory=dict)

    @property
    def strategy_names(self) -> Tuple[str, ...]:
        return tuple(strat.name for strat in self.strategies)

    def cell(self, s: str, strategy: str) -> RiskCell:
        try:
            return self.cells[(s, strategy)]
        except KeyError:
            raise InputError(f"risk table has no cell for scenario {s!r} and strategy {strategy!r}")

    def mean(self, s: str, strategy: str) -> float:
        return self.cell(s, strategy).mean

    def means_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [[self.mean(s, name) for name in self.strategy_names] for s in self.scenarios],
            index=list(self.scenarios), columns=list(self.strategy_names),
        )
        frame.index.name = "scenario"
        return frame

    def optimal(self, s: str) -> str:
        """Risk-optimal strategy for a single scenario (first declared on ties)."""
        costs = [self.mean(s, name) for name in self.strategy_names]
        return self.strategy_names[int(np.argmin(costs))]

    def to_dict(self) -> Dict:
        return {
            "scenarios": list(self.scenarios),
            "strategies": [strat.to_dict() for strat in self.strategies],
            "no_anomaly": self.no_anomaly,
            "seed": self.seed,
            "cells": {
                s: {name: self.cell(s, name).to_dict() for name in self.strategy_names}
                for s in self.scenarios
            },
            "optimal": {s: self.optimal(s) for s in self.scenarios},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "StrategyRiskTable":
        try:
            strategies = tuple(Strategy.from_dict(d) for d in data["strategies"])
            scenarios = tuple(data["scenarios"])
            cells = {
                (s, strat.name): RiskCell(float(c["mean"]), float(c["stderr"]), int(c["n"]))
                for s in scenarios
                for strat in strategies
                for c in [data["cells"][s][strat.name]]
            }
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed risk table: {e!r}")
        return cls(scenarios, strategies, cells, data.get("no_anomaly", NO_ANOMALY), data.get("seed"))

    @classmethod
    def from_means(cls, means: Mapping[str, Mapping[str, float]], strategies: Sequence[Strategy],
                   no_anomaly: str = NO_ANOMALY) -> "StrategyRiskTable":
        """Table of point values, e.g. published per-scenario costs."""
        scenarios = tuple(means)
        cells = {(s, strat.name): RiskCell(float(means[s][strat.name]), 0.0, 0)
                 for s in scenarios for strat in strategies}
        return cls(scenarios, tuple(strategies), cells, no_anomaly)

    def histograms(self, bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
        """Per-cell histograms of retained per-sample costs."""
        if not self.samples:
            raise InputError("risk table was built without retained samples")
        frames = []
        for s in self.scenarios:
            for name in self.strategy_names:
                counts, edges = np.histogram(self.samples[(s, name)], bins=bins)
                frames.append(pd.DataFrame({
                    "scenario": s, "strategy": name,
                    "bin_left": edges[:-1], "bin_right": edges[1:], "count": counts,
                }))
        return pd.concat(frames, ignore_index=True)


def risk_table(strategies: Sequence[Strategy], rel: ReliabilityPosterior, cfg: CostConfig, n: int, seed: int,
               threads: int = 1, keep_samples: bool = False, failure_cost_mode: str = "sampled",
               scenarios: Optional[Sequence[str]] = None) -> StrategyRiskTable:
    strategies = tuple(strategies)
    names = [strat.name for strat in strategies]
    if len(set(names)) != len(names):
        raise InputError(f"strategy names must be unique, got {names}")
    _check_labels(rel, cfg)
    _check_samples(strategies, n)
    scenarios = tuple(scenarios) if scenarios is not None else rel.classes

    cells: Dict[Tuple[str, str], RiskCell] = {}
    kept: Dict[Tuple[str, str], np.ndarray] = {}
    for s in scenarios:
        samples = scenario_cost_samples(s, strategies, rel, cfg, n, seed, threads, failure_cost_mode)
        for m, strat in enumerate(strategies):
            cells[(s, strat.name)] = risk_cell(s, strat, cfg, samples[:, m])
            if keep_samples:
                kept[(s, strat.name)] = samples[:, m].copy()
        logger.info(f"Scenario {s}: " + ", ".join(f"{name}={cells[(s, name)].mean:.2f}" for name in names))
    return StrategyRiskTable(scenarios, strategies, cells, cfg.no_anomaly, seed, kept)


@dataclass(frozen=True)
class ScenarioMix:
    """Prevalence Pr(s) of each true weld state."""

    prevalence: Mapping[str, float]

    def __post_init__(self):
        try:
            prevalence = {str(k): float(v) for k, v in dict(self.prevalence).items()}
        except (TypeError, ValueError):
            raise InputError(f"prevalences must map scenarios to numbers, got {self.prevalence!r}")
        if any(not np.isfinite(v) or v < 0 for v in prevalence.values()):
            raise InputError(f"prevalences must be non-negative, got {prevalence}")
        if not math.isclose(sum(prevalence.values()), 1.0, abs_tol=1e-9):
            raise InputError(f"prevalences must sum to 1, got {sum(prevalence.values())}")
        object.__setattr__(self, "prevalence", prevalence)

    @classmethod
    def from_profile(cls, no_anomaly_share: float, anomaly_profile: Mapping[str, float],
                     no_anomaly: str = NO_ANOMALY) -> "ScenarioMix":
        prevalence = {no_anomaly: no_anomaly_share}
        prevalence.update({k: (1.0 - no_anomaly_share) * v for k, v in anomaly_profile.items()})
        return cls(prevalence)

    def weight(self, s: str) -> float:
        return self.prevalence.get(s, 0.0)


def _check_mix(table: StrategyRiskTable, mix: ScenarioMix) -> None:
    extra = [s for s, p in mix.prevalence.items() if s not in table.scenarios and p > 0]
    missing = [s for s in table.scenarios if s not in mix.prevalence]
    if extra or missing:
        raise InputError(f"prevalence does not match table scenarios: missing {missing}, unknown {extra}")


def mixed_cost(table: StrategyRiskTable, mix: ScenarioMix, strategy: str) -> float:
    _check_mix(table, mix)
    return float(sum(mix.weight(s) * table.mean(s, strategy) for s in table.scenarios))


@dataclass(frozen=True)
class RankedStrategy:
    strategy: str
    cost: float
    rank: int
    tied: bool


def _tie(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-9)


def rank_strategies(table: StrategyRiskTable, mix: ScenarioMix) -> List[RankedStrategy]:
    """Strategies in ascending prevalence-weighted cost; ties keep declaration order and share a rank."""
    costs = [(mixed_cost(table, mix, name), position, name) for position, name in enumerate(table.strategy_names)]
    costs.sort(key=lambda item: (item[0], item[1]))

    ranked: List[RankedStrategy] = []
    rank = 0
    for position, (cost, _, name) in enumerate(costs):
        tied_prev = position > 0 and _tie(cost, costs[position - 1][0])
        tied_next = position + 1 < len(costs) and _tie(cost, costs[position + 1][0])
        if not tied_prev:
            rank = position + 1
        ranked.append(RankedStrategy(name, cost, rank, tied_prev or tied_next))
    return ranked


@dataclass(frozen=True)
class BreakEven:
    """No-anomaly share at which two strategies have equal mixed cost.

    ``first_preferred_above`` tells on which side of the threshold the first
    strategy is cheaper.
    """

    first: str
    second: str
    threshold: Optional[float]
    status: str
    first_preferred_above: Optional[bool]

    def to_dict(self) -> Dict:
        return {
            "first": self.first, "second": self.second, "threshold": self.threshold,
            "status": self.status, "first_preferred_above": self.first_preferred_above,
        }


def break_even_prevalence(table: StrategyRiskTable, anomaly_profile: Mapping[str, float],
                          first: str = StrategyKind.HYBRID.value,
                          second: str = StrategyKind.MANUAL.value) -> BreakEven:
    """Share of no-anomaly welds at which ``first`` and ``second`` cost the same.

    Anomalies split per ``anomaly_profile``; the mixed-cost difference is linear
    in the no-anomaly share, so the crossing is solved in closed form.
    """
    none = table.no_anomaly
    anomalies = [s for s in table.scenarios if s != none]
    unknown = [a for a in anomaly_profile if a not in anomalies]
    if unknown:
        raise InputError(f"anomaly profile names classes not in the table: {unknown}")
    if any(v < 0 for v in anomaly_profile.values()) or not math.isclose(
            sum(anomaly_profile.values()), 1.0, abs_tol=1e-9):
        raise InputError(f"anomaly profile must be non-negative and sum to 1, got {dict(anomaly_profile)}")

    def difference(s: str) -> float:
        return table.mean(s, first) - table.mean(s, second)

    d_none = difference(none)
    d_anomaly = sum(anomaly_profile.get(a, 0.0) * difference(a) for a in anomalies)

    scale = max(abs(d_none), abs(d_anomaly), 1.0)
    if math.isclose(d_none, d_anomaly, rel_tol=1e-12, abs_tol=1e-12 * scale):
        if math.isclose(d_none, 0.0, abs_tol=1e-9 * scale):
            return BreakEven(first, second, None, "tie", None)
        if d_none < 0:
            return BreakEven(first, second, 0.0, "always_first", True)
        return BreakEven(first, second, 1.0, "always_second", True)

    p = d_anomaly / (d_anomaly - d_none)
    first_above = d_none < d_anomaly
    if 0.0 < p < 1.0:
        return BreakEven(first, second, p, "crossing", first_above)
    # No interior crossing: one strategy wins over the whole range. The
    # threshold sits at the end of [0, 1] that keeps first_preferred_above true.
    midpoint = 0.5 * d_none + 0.5 * d_anomaly
    if midpoint < 0:
        return BreakEven(first, second, 0.0 if first_above else 1.0, "always_first", first_above)
    return BreakEven(first, second, 1.0 if first_above else 0.0, "always_second", first_above)
