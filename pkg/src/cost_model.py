"""Activity costs and the random failure-cost mixture."""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from config.config import (
    CHUNK_SIZE,
    CRACKING,
    HISTOGRAM_BINS,
    LACK_OF_PENETRATION,
    NO_ANOMALY,
    POROSITY,
)
from src.rng import STREAM_FAILURE_COST, dirichlet_rows, map_chunks, substream
from utils.custom_exception import InputError

ArrayLike = Union[float, np.ndarray]


def _non_negative(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise InputError(f"{name} must be a finite non-negative number, got {value}")
    return value


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InputError(f"{name} must be strictly positive, got {value}")
    return value


@dataclass(frozen=True)
class FailureCostMixture:
    """``pi_1 * N+(location, scale^2) + pi_2 * Gamma(shape, scale)``, ``pi ~ Dirichlet(weights)`` per draw."""

    dirichlet_weights: Tuple[float, float] = (9.0, 3.0)
    minor_location: float = 50_000.0
    minor_scale: float = 3_000.0
    major_shape: float = 6.0
    major_scale: float = 40_000.0

    def __post_init__(self):
        weights = tuple(float(w) for w in self.dirichlet_weights)
        if len(weights) != 2:
            raise InputError(f"failure-cost mixture needs exactly 2 Dirichlet weights, got {len(weights)}")
        for w in weights:
            _positive("Dirichlet weight", w)
        object.__setattr__(self, "dirichlet_weights", weights)
        object.__setattr__(self, "minor_location", float(self.minor_location))
        object.__setattr__(self, "minor_scale", _positive("minor.scale", self.minor_scale))
        object.__setattr__(self, "major_shape", _positive("major.shape", self.major_shape))
        object.__setattr__(self, "major_scale", _positive("major.scale", self.major_scale))
        if not np.isfinite(self.minor_location):
            raise InputError("minor.location must be finite")

    @property
    def mean_weights(self) -> Tuple[float, float]:
        w1, w2 = self.dirichlet_weights
        return w1 / (w1 + w2), w2 / (w1 + w2)

    def _minor(self):
        a = (0.0 - self.minor_location) / self.minor_scale
        return stats.truncnorm(a, np.inf, loc=self.minor_location, scale=self.minor_scale)

    def minor_mean(self) -> float:
        return float(self._minor().mean())

    def major_mean(self) -> float:
        return self.major_shape * self.major_scale

    def scaled(self, factor: float) -> "FailureCostMixture":
        factor = _positive("cost scale", factor)
        return FailureCostMixture(
            self.dirichlet_weights,
            self.minor_location * factor,
            self.minor_scale * factor,
            self.major_shape,
            self.major_scale * factor,
        )

    def to_dict(self) -> Dict:
        return {
            "dirichlet_weights": list(self.dirichlet_weights),
            "minor": {"location": self.minor_location, "scale": self.minor_scale},
            "major": {"shape": self.major_shape, "scale": self.major_scale},
        }


def _default_repair_cost() -> Dict[str, float]:
    return {CRACKING: 1000.0, LACK_OF_PENETRATION: 3000.0, POROSITY: 500.0}


def _default_multiplier() -> Dict[str, float]:
    return {LACK_OF_PENETRATION: 1.0, CRACKING: 0.5, POROSITY: 0.1}


@dataclass(frozen=True)
class CostConfig:
    manual_evaluation_cost: float = 350.0
    repair_cost: Mapping[str, float] = field(default_factory=_default_repair_cost)
    failure_multiplier: Mapping[str, float] = field(default_factory=_default_multiplier)
    mixture: FailureCostMixture = field(default_factory=FailureCostMixture)
    no_anomaly: str = NO_ANOMALY
    escalation_set: Tuple[str, ...] = (CRACKING, LACK_OF_PENETRATION)

    def __post_init__(self):
        object.__setattr__(self, "manual_evaluation_cost",
                           _non_negative("manual_evaluation_cost", self.manual_evaluation_cost))
        repair = {str(k): _non_negative(f"repair_cost.{k}", v) for k, v in dict(self.repair_cost).items()}
        multiplier = {str(k): _non_negative(f"failure_multiplier.{k}", v)
                      for k, v in dict(self.failure_multiplier).items()}
        if self.no_anomaly in repair or self.no_anomaly in multiplier:
            raise InputError(f"the no-anomaly class {self.no_anomaly!r} cannot have a repair cost or failure multiplier")
        if set(repair) != set(multiplier):
            raise InputError(
                f"repair_cost and failure_multiplier must cover the same anomaly classes: "
                f"{sorted(repair)} vs {sorted(multiplier)}"
            )
        escalation = tuple(str(s) for s in self.escalation_set)
        unknown = [s for s in escalation if s not in repair]
        if unknown:
            raise InputError(f"escalation set contains unknown anomaly classes: {unknown}")
        object.__setattr__(self, "repair_cost", repair)
        object.__setattr__(self, "failure_multiplier", multiplier)
        object.__setattr__(self, "escalation_set", escalation)

    @property
    def anomaly_classes(self) -> Tuple[str, ...]:
        return tuple(self.repair_cost)

    @property
    def labels(self) -> Tuple[str, ...]:
        return (self.no_anomaly,) + self.anomaly_classes

    def check_label(self, label: str) -> str:
        if label != self.no_anomaly and label not in self.repair_cost:
            raise InputError(f"unknown class label {label!r}; expected one of {list(self.labels)}")
        return label

    def repair(self, label: str) -> float:
        """Repair cost of a class; zero for the no-anomaly class."""
        self.check_label(label)
        return 0.0 if label == self.no_anomaly else self.repair_cost[label]

    def scaled(self, factor: float) -> "CostConfig":
        """Every currency-valued parameter multiplied by ``factor``."""
        factor = _positive("cost scale", factor)
        return CostConfig(
            manual_evaluation_cost=self.manual_evaluation_cost * factor,
            repair_cost={k: v * factor for k, v in self.repair_cost.items()},
            failure_multiplier=dict(self.failure_multiplier),
            mixture=self.mixture.scaled(factor),
            no_anomaly=self.no_anomaly,
            escalation_set=self.escalation_set,
        )

    def to_dict(self) -> Dict:
        return {
            "labels": {"no_anomaly": self.no_anomaly},
            "manual_evaluation_cost": self.manual_evaluation_cost,
            "repair_cost": dict(self.repair_cost),
            "failure_multiplier": dict(self.failure_multiplier),
            "failure_cost_mixture": self.mixture.to_dict(),
            "hybrid": {"escalation_set": list(self.escalation_set)},
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _truncated_normal(rng: np.random.Generator, loc: float, scale: float, size: int) -> np.ndarray:
    # Rejection below zero; acceptance is ~1 for the default parameters
    draws = rng.normal(loc, scale, size)
    rejected = draws < 0
    while np.any(rejected):
        draws[rejected] = rng.normal(loc, scale, int(rejected.sum()))
        rejected = draws < 0
    return draws


def draw_failure_costs(mix: FailureCostMixture, rng: np.random.Generator,
                       size: int) -> Tuple[np.ndarray, np.ndarray]:
    """One chunk of mixture draws and the minor-mode weight used for each."""
    pi_minor = dirichlet_rows(rng, mix.dirichlet_weights, size)[:, 0]
    pick_minor = rng.random(size) < pi_minor
    minor = _truncated_normal(rng, mix.minor_location, mix.minor_scale, size)
    major = rng.gamma(mix.major_shape, mix.major_scale, size)
    return np.where(pick_minor, minor, major), pi_minor


def sample_failure_cost(mix: FailureCostMixture, n: int, seed: int, threads: int = 1,
                        stream_index: int = 0, chunk_size: int = CHUNK_SIZE,
                        return_weights: bool = False):
    """``n`` seeded draws of ``C_fail``; optionally also the sampled ``pi_1`` values."""

    def draw(chunk: int, size: int):
        return draw_failure_costs(mix, substream(seed, STREAM_FAILURE_COST, stream_index, chunk), size)

    chunks = map_chunks(draw, n, threads, chunk_size)
    costs = np.concatenate([c for c, _ in chunks])
    if return_weights:
        return costs, np.concatenate([w for _, w in chunks])
    return costs


def expected_failure_cost(mix: FailureCostMixture) -> float:
    w1, w2 = mix.mean_weights
    return w1 * mix.minor_mean() + w2 * mix.major_mean()


def failure_cost_variance(mix: FailureCostMixture) -> float:
    # Marginally each draw comes from component i with probability E[pi_i]
    w1, w2 = mix.mean_weights
    minor = mix._minor()
    second_minor = float(minor.var()) + float(minor.mean()) ** 2
    second_major = mix.major_shape * mix.major_scale ** 2 + mix.major_mean() ** 2
    return w1 * second_minor + w2 * second_major - expected_failure_cost(mix) ** 2


def failure_cost_for(s: str, c: ArrayLike, cfg: CostConfig) -> ArrayLike:
    """Consequence of leaving anomaly ``s`` unrepaired given a failure-cost draw ``c``."""
    if s == cfg.no_anomaly:
        raise InputError(f"no failure cost is defined for the no-anomaly class {s!r}")
    cfg.check_label(s)
    return cfg.failure_multiplier[s] * c


def failure_cost_histogram(samples: np.ndarray, bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
    counts, edges = np.histogram(samples, bins=bins)
    return pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts})
