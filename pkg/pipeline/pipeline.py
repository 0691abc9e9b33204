import json
from typing import Dict, Mapping, Optional, Sequence

from config.config import DEFAULT_PRIOR, DEFAULT_SEED, DEFAULT_THREADS, MARGINAL_GRID_POINTS
from pipeline import run_stage
from src.cost_model import (CostConfig, expected_failure_cost, failure_cost_histogram,
                            sample_failure_cost)
from src.data_loader import ConfusionMatrixLoader, CostConfigLoader, resolve_costs_path
from src.decision import (ScenarioMix, StrategyRiskTable, break_even_prevalence, default_strategies,
                          rank_strategies, risk_table)
from src.reliability import (ReliabilityPosterior, fit_posterior, marginal_density_grid,
                             marginal_quantile_table)
from src.voi import VopiResult, vopi_report
from utils.custom_exception import InputError
from utils.logger import get_logger

logger = get_logger(__name__)

UNIFORM_PROFILE = "uniform"


def anomaly_profile(profile: str, anomalies: Sequence[str]) -> Dict[str, float]:
    """``uniform``, a single anomaly class, or a JSON map of anomaly shares."""
    if profile == UNIFORM_PROFILE:
        return {a: 1.0 / len(anomalies) for a in anomalies}
    if profile in anomalies:
        return {a: float(a == profile) for a in anomalies}
    try:
        parsed = json.loads(profile)
    except json.JSONDecodeError:
        raise InputError(f"unknown profile {profile!r}; use 'uniform', one of {list(anomalies)} or a JSON map")
    if not isinstance(parsed, dict):
        raise InputError(f"profile must be a JSON object, got {profile!r}")
    try:
        return {str(k): float(v) for k, v in parsed.items()}
    except (TypeError, ValueError):
        raise InputError(f"profile shares must be numbers, got {profile!r}")


def parse_prevalence(text: Optional[str]) -> Optional[ScenarioMix]:
    if text is None:
        return None
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"--prevalence must be a JSON object: {e.msg}", source="--prevalence", column=e.colno)
    if not isinstance(parsed, dict):
        raise InputError("--prevalence must be a JSON object mapping scenarios to shares")
    return ScenarioMix(parsed)


class RiskAnalysisPipeline:
    """Confusion matrix and cost file in; posterior, risk table, thresholds and VoPI out."""

    def __init__(self, confusion_csv: Optional[str] = None, costs_path: Optional[str] = None,
                 prior: float = DEFAULT_PRIOR, seed: int = DEFAULT_SEED, threads: int = DEFAULT_THREADS,
                 cost_scale: float = 1.0):
        self.confusion_csv = confusion_csv
        self.costs_path = costs_path
        self.prior = prior
        self.seed = seed
        self.threads = threads
        self.cost_scale = cost_scale
        self._posterior: Optional[ReliabilityPosterior] = None
        self._costs: Optional[CostConfig] = None

    @property
    def posterior(self) -> ReliabilityPosterior:
        if self._posterior is None:
            if self.confusion_csv is None:
                raise InputError("no confusion matrix was given")
            cm = ConfusionMatrixLoader(self.confusion_csv).load()
            self._posterior = run_stage("posterior fit", fit_posterior, cm, [self.prior] * cm.k)
        return self._posterior

    @property
    def costs(self) -> CostConfig:
        if self._costs is None:
            cfg = CostConfigLoader(resolve_costs_path(self.costs_path)).load()
            self._costs = cfg.scaled(self.cost_scale) if self.cost_scale != 1.0 else cfg
        return self._costs

    def fit(self, grid_points: int = MARGINAL_GRID_POINTS):
        """Posterior summary plus Beta-marginal density grid and quantile table."""
        p = self.posterior
        grid = run_stage("marginal density grid", marginal_density_grid, p, grid_points)
        quantiles = run_stage("marginal quantiles", marginal_quantile_table, p)
        return p.to_dict(), grid, quantiles

    def risk(self, n: int, prevalence: Optional[ScenarioMix] = None, failure_cost_mode: str = "sampled"):
        """Strategy risk table, per-cell histograms and the failure-cost histogram."""
        cfg = self.costs
        strategies = default_strategies(cfg)
        table = run_stage("risk table", risk_table, strategies, self.posterior, cfg, n, self.seed,
                          self.threads, keep_samples=True, failure_cost_mode=failure_cost_mode)
        payload = table.to_dict()
        payload["expected_failure_cost"] = expected_failure_cost(cfg.mixture)
        payload["failure_cost_mode"] = failure_cost_mode
        if prevalence is not None:
            payload["ranking"] = [
                {"strategy": r.strategy, "cost": r.cost, "rank": r.rank, "tied": r.tied}
                for r in rank_strategies(table, prevalence)
            ]
            payload["prevalence"] = dict(prevalence.prevalence)
        c_fail = run_stage("failure-cost sampling", sample_failure_cost, cfg.mixture, n, self.seed, self.threads)
        return table, payload, table.histograms(), failure_cost_histogram(c_fail)

    @staticmethod
    def threshold(report: Mapping, profile: str = UNIFORM_PROFILE, first: str = "hybrid",
                  second: str = "manual") -> Dict:
        table = StrategyRiskTable.from_dict(report)
        anomalies = [s for s in table.scenarios if s != table.no_anomaly]
        shares = anomaly_profile(profile, anomalies)
        result = break_even_prevalence(table, shares, first, second)
        logger.info(f"Break-even {first} vs {second} ({profile}): {result.status} {result.threshold}")
        return {"profile": profile, "anomaly_profile": shares, "break_even": result.to_dict()}

    def vopi(self, n: int, prevalence: Optional[ScenarioMix] = None,
             failure_cost_mode: str = "sampled") -> VopiResult:
        cfg = self.costs
        return run_stage("VoPI", vopi_report, prevalence, default_strategies(cfg), self.posterior, cfg, n,
                         self.seed, self.threads, failure_cost_mode, keep_samples=True)
