"""Value of perfect information about classifier reliability."""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from config.config import MIN_VOPI_SAMPLES
from src.cost_model import CostConfig
from src.decision import ScenarioMix, Strategy, risk_cell, scenario_cost_samples, scenario_risk
from src.reliability import ReliabilityPosterior
from utils.custom_exception import InputError
from utils.logger import get_logger

logger = get_logger(__name__)


def _check_vopi_samples(n: int) -> None:
    if n < MIN_VOPI_SAMPLES:
        raise InputError(f"at least {MIN_VOPI_SAMPLES} outer samples are required for VoPI, got {n}")


def prior_cost(s: str, strategies: Sequence[Strategy], rel: ReliabilityPosterior, cfg: CostConfig,
               n: int, seed: int, threads: int = 1, failure_cost_mode: str = "sampled") -> float:
    """Lowest expected cost over strategies under current reliability uncertainty."""
    if not strategies:
        raise InputError("at least one strategy is required")
    return min(scenario_risk(s, strat, rel, cfg, n, seed, threads, failure_cost_mode)[0] for strat in strategies)


def preposterior_cost(s: str, strategies: Sequence[Strategy], rel: ReliabilityPosterior, cfg: CostConfig,
                      n: int, seed: int, threads: int = 1, failure_cost_mode: str = "sampled") -> float:
    """Expected cost when the best strategy can be chosen for every posterior draw."""
    _check_vopi_samples(n)
    samples = scenario_cost_samples(s, strategies, rel, cfg, n, seed, threads, failure_cost_mode)
    return float(np.mean(samples.min(axis=1)))


@dataclass(frozen=True)
class VopiEntry:
    scenario: str
    prior_cost: float
    preposterior_cost: float
    vopi: float
    stderr: float
    n: int
    prior_optimal: str
    switch_rate: float

    def scaled(self, per: float) -> "VopiEntry":
        return VopiEntry(self.scenario, self.prior_cost * per, self.preposterior_cost * per, self.vopi * per,
                         self.stderr * per, self.n, self.prior_optimal, self.switch_rate)

    def to_dict(self) -> Dict:
        return {
            "prior_cost": self.prior_cost,
            "preposterior_cost": self.preposterior_cost,
            "vopi": self.vopi,
            "stderr": self.stderr,
            "n": self.n,
            "prior_optimal": self.prior_optimal,
            "switch_rate": self.switch_rate,
        }


@dataclass
class VopiResult:
    entries: Dict[str, VopiEntry]
    failure_cost_mode: str
    aggregate: Optional[Dict[str, float]] = None
    inner_samples: Dict[str, pd.DataFrame] = field(default_factory=dict)

    def per(self, radiographs: float) -> Dict[str, Dict]:
        return {s: entry.scaled(radiographs).to_dict() for s, entry in self.entries.items()}

    def to_dict(self, per: float = 1.0) -> Dict:
        payload = {
            "failure_cost_mode": self.failure_cost_mode,
            "per_radiograph": {s: entry.to_dict() for s, entry in self.entries.items()},
            "per": per,
            "scaled": self.per(per),
        }
        if self.aggregate is not None:
            payload["aggregate"] = dict(self.aggregate)
            payload["aggregate_scaled"] = {k: (v * per if k != "n" else v) for k, v in self.aggregate.items()}
        return payload

    def inner_frame(self) -> pd.DataFrame:
        """Per-draw inner minima of every scenario, in scenario order."""
        if not self.inner_samples:
            return pd.DataFrame(columns=["scenario", "inner_min", "gain", "inner_optimal"])
        return pd.concat([self.inner_samples[s] for s in self.entries if s in self.inner_samples],
                         ignore_index=True)

    def bar_frame(self, per: float = 1.0) -> pd.DataFrame:
        return pd.DataFrame.from_records([
            {"scenario": s, "vopi": e.vopi * per, "stderr": e.stderr * per, "prior_optimal": e.prior_optimal}
            for s, e in self.entries.items()
        ])


def vopi(s: str, strategies: Sequence[Strategy], rel: ReliabilityPosterior, cfg: CostConfig, n: int, seed: int,
         threads: int = 1, failure_cost_mode: str = "sampled", keep_samples: bool = False):
    """Prior cost, pre-posterior cost and their difference for one scenario.

    Returns the ``VopiEntry`` and, if ``keep_samples``, a frame of per-draw
    inner minima (otherwise ``None``).
    """
    if not strategies:
        raise InputError("at least one strategy is required")
    _check_vopi_samples(n)
    samples = scenario_cost_samples(s, strategies, rel, cfg, n, seed, threads, failure_cost_mode)
    means = [risk_cell(s, strat, cfg, samples[:, m]).mean for m, strat in enumerate(strategies)]
    return vopi_from_samples(s, [strat.name for strat in strategies], samples, means, keep_samples)


def vopi_from_samples(s: str, names: Sequence[str], samples: np.ndarray, means: Optional[Sequence[float]] = None,
                      keep_samples: bool = False):
    """VoPI from paired per-draw costs, shape ``(n, len(names))``.

    ``means`` overrides the column means used for the prior decision (exact
    values for closed-form strategies).
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    _check_vopi_samples(n)
    if samples.ndim != 2 or samples.shape[1] != len(names) or not names:
        raise InputError(f"expected samples of shape (n, {len(names)}), got {samples.shape}")
    if means is None:
        means = samples.mean(axis=0)
    best = int(np.argmin(means))
    inner = samples.min(axis=1)
    gain = samples[:, best] - inner

    prior = float(means[best])
    prepost = float(np.mean(inner))
    value = prior - prepost
    stderr = float(np.std(gain, ddof=1) / math.sqrt(n))
    entry = VopiEntry(s, prior, prepost, value, stderr, n, names[best], float(np.mean(gain > 0)))

    if value < -3 * stderr:
        logger.warning(f"VoPI for {s} is {value:.4f}, below -3 stderr ({stderr:.4f})")
    logger.info(f"VoPI {s}: prior={prior:.2f} preposterior={prepost:.2f} vopi={value:.4f} +/- {stderr:.4f}")

    frame = None
    if keep_samples:
        frame = pd.DataFrame({
            "scenario": s,
            "inner_min": inner,
            "gain": gain,
            "inner_optimal": np.asarray(names)[np.argmin(samples, axis=1)],
        })
    return entry, frame


def vopi_report(mix: Optional[ScenarioMix], strategies: Sequence[Strategy], rel: ReliabilityPosterior,
                cfg: CostConfig, n: int, seed: int, threads: int = 1, failure_cost_mode: str = "sampled",
                scenarios: Optional[Sequence[str]] = None, keep_samples: bool = False) -> VopiResult:
    """Per-scenario VoPI and, when a scenario mix is given, the prevalence-weighted aggregate."""
    scenarios = tuple(scenarios) if scenarios is not None else rel.classes
    entries: Dict[str, VopiEntry] = {}
    kept: Dict[str, pd.DataFrame] = {}
    for s in scenarios:
        entries[s], frame = vopi(s, strategies, rel, cfg, n, seed, threads, failure_cost_mode, keep_samples)
        if frame is not None:
            kept[s] = frame

    aggregate = None
    if mix is not None:
        missing = [s for s in scenarios if s not in mix.prevalence]
        extra = [s for s, p in mix.prevalence.items() if s not in scenarios and p > 0]
        if missing or extra:
            raise InputError(f"prevalence does not match scenarios: missing {missing}, unknown {extra}")
        aggregate = {
            "prior_cost": sum(mix.weight(s) * e.prior_cost for s, e in entries.items()),
            "preposterior_cost": sum(mix.weight(s) * e.preposterior_cost for s, e in entries.items()),
            "vopi": sum(mix.weight(s) * e.vopi for s, e in entries.items()),
            # scenarios use independent substreams
            "stderr": math.sqrt(sum((mix.weight(s) * e.stderr) ** 2 for s, e in entries.items())),
            "n": n,
        }
    return VopiResult(entries, failure_cost_mode, aggregate, kept)
