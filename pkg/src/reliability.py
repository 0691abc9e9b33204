"""Conjugate Dirichlet-multinomial model of classifier reliability."""

from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from config.config import CHUNK_SIZE, DEFAULT_PRIOR
from src.rng import STREAM_RELIABILITY, chunk_sizes, dirichlet_rows, map_chunks, substream
from utils.custom_exception import InputError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts of (true class x predicted class); rows are true classes."""

    classes: Tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        classes = tuple(str(c) for c in self.classes)
        counts = np.asarray(self.counts)
        if len(set(classes)) != len(classes):
            raise InputError(f"duplicate class labels: {list(classes)}")
        if counts.ndim != 2 or counts.shape != (len(classes), len(classes)):
            raise InputError(
                f"confusion matrix must be {len(classes)}x{len(classes)}, got shape {counts.shape}"
            )
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.isfinite(counts)) or not np.all(counts == np.round(counts)):
                raise InputError("confusion counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise InputError("confusion counts must be non-negative")
        if not np.any(counts.sum(axis=1) > 0):
            raise InputError("at least one row of the confusion matrix must have a positive total")
        counts.setflags(write=False)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "counts", counts)

    @property
    def k(self) -> int:
        return len(self.classes)

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise InputError(f"unknown class label {label!r}; expected one of {list(self.classes)}")

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes:
            raise InputError("cannot add confusion matrices with different class orderings")
        return ConfusionMatrix(self.classes, self.counts + other.counts)


@dataclass(frozen=True, eq=False)
class ReliabilityPosterior:
    """Per-true-class Dirichlet posterior; row ``i`` of ``posterior_alpha`` is ``alpha + C[i, :]``."""

    classes: Tuple[str, ...]
    prior_alpha: np.ndarray
    posterior_alpha: np.ndarray

    @property
    def k(self) -> int:
        return len(self.classes)

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise InputError(f"unknown class label {label!r}; expected one of {list(self.classes)}")

    def row(self, label: Union[str, int]) -> np.ndarray:
        i = label if isinstance(label, (int, np.integer)) else self.index(label)
        return self.posterior_alpha[i]

    def to_dict(self) -> Dict:
        return {
            "classes": list(self.classes),
            "prior_alpha": self.prior_alpha.tolist(),
            "posterior_alpha": self.posterior_alpha.tolist(),
            "posterior_mean": posterior_mean(self).tolist(),
        }


def _exact(values: np.ndarray) -> np.ndarray:
    """Integer array when every value is integral, float otherwise."""
    values = np.asarray(values)
    if np.issubdtype(values.dtype, np.integer):
        return values.astype(np.int64)
    if np.all(np.isfinite(values)) and np.all(values == np.round(values)):
        return values.astype(np.int64)
    return values.astype(float)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values)
    values.setflags(write=False)
    return values


def default_prior(k: int) -> np.ndarray:
    return np.full(k, DEFAULT_PRIOR)


def fit_posterior(cm: ConfusionMatrix, prior_alpha: Sequence[float] = None) -> ReliabilityPosterior:
    """Closed-form Dirichlet posterior for every row of ``cm``."""
    if prior_alpha is None:
        prior_alpha = default_prior(cm.k)
    prior = _exact(np.asarray(prior_alpha))
    if prior.ndim != 1 or prior.shape[0] != cm.k:
        raise InputError(f"prior must have {cm.k} entries to match the confusion matrix, got {prior.shape}")
    if not np.all(np.isfinite(prior)) or np.any(prior <= 0):
        raise InputError(f"prior concentrations must be strictly positive, got {prior.tolist()}")

    posterior = prior[np.newaxis, :] + cm.counts
    logger.info(f"Fitted reliability posterior over {cm.k} classes ({int(cm.counts.sum())} test cases)")
    return ReliabilityPosterior(cm.classes, _frozen(prior), _frozen(posterior))


def update_posterior(p: ReliabilityPosterior, cm: ConfusionMatrix) -> ReliabilityPosterior:
    """Conjugate update of an existing posterior with further test evidence."""
    if cm.classes != p.classes:
        raise InputError("class ordering of the new evidence does not match the posterior")
    return ReliabilityPosterior(p.classes, p.prior_alpha, _frozen(p.posterior_alpha + cm.counts))


def posterior_mean(p: ReliabilityPosterior) -> np.ndarray:
    alpha = np.asarray(p.posterior_alpha, dtype=float)
    return alpha / alpha.sum(axis=1, keepdims=True)


def posterior_covariance(p: ReliabilityPosterior, label: Union[str, int]) -> np.ndarray:
    """Analytic Dirichlet covariance of one posterior row."""
    alpha = np.asarray(p.row(label), dtype=float)
    a0 = alpha.sum()
    mean = alpha / a0
    return (np.diag(mean) - np.outer(mean, mean)) / (a0 + 1.0)


def sample_row(p: ReliabilityPosterior, label: Union[str, int], n: int, seed: int,
               threads: int = 1, chunk_size: int = CHUNK_SIZE) -> np.ndarray:
    """``n`` draws of ``theta`` for one true class, shape ``(n, K)``."""
    i = label if isinstance(label, (int, np.integer)) else p.index(label)
    alpha = p.posterior_alpha[i]

    def draw(chunk: int, size: int) -> np.ndarray:
        return dirichlet_rows(substream(seed, STREAM_RELIABILITY, int(i), chunk), alpha, size)

    return np.concatenate(map_chunks(draw, n, threads, chunk_size), axis=0)


def _reliability_chunk(p: ReliabilityPosterior, seed: int, chunk: int, size: int) -> np.ndarray:
    rows = [
        dirichlet_rows(substream(seed, STREAM_RELIABILITY, i, chunk), p.posterior_alpha[i], size)
        for i in range(p.k)
    ]
    return np.stack(rows, axis=1)


def iter_reliability(p: ReliabilityPosterior, n: int, seed: int,
                     chunk_size: int = CHUNK_SIZE) -> Iterator[np.ndarray]:
    """Stream of reliability samples in chunks of shape ``(chunk, K, K)``."""
    for chunk, size in enumerate(chunk_sizes(n, chunk_size)):
        yield _reliability_chunk(p, seed, chunk, size)


def sample_reliability(p: ReliabilityPosterior, n: int, seed: int, threads: int = 1,
                       chunk_size: int = CHUNK_SIZE) -> np.ndarray:
    """All of ``iter_reliability`` at once, shape ``(n, K, K)``; for small ``n`` only.

    Row ``i`` of every sample equals the corresponding draw of
    ``sample_row(p, i, n, seed)``. Risk and VoPI never materialise this: they
    stream one row per scenario.
    """
    chunks = map_chunks(lambda chunk, size: _reliability_chunk(p, seed, chunk, size), n, threads, chunk_size)
    return np.concatenate(chunks, axis=0)


def _beta_params(p: ReliabilityPosterior, i: Union[str, int], j: Union[str, int]) -> Tuple[float, float]:
    i = i if isinstance(i, (int, np.integer)) else p.index(i)
    j = j if isinstance(j, (int, np.integer)) else p.index(j)
    row = np.asarray(p.posterior_alpha[i], dtype=float)
    a = row[j]
    return float(a), float(row.sum() - a)


def marginal_density_summary(p: ReliabilityPosterior, i: Union[str, int], j: Union[str, int],
                             quantiles: Sequence[float]) -> Dict[str, object]:
    """Quantiles of the Beta marginal of ``theta[i][j]``.

    Marginals of a Dirichlet row are ``Beta(a_ij, rowsum - a_ij)``.
    """
    qs = np.asarray(list(quantiles), dtype=float)
    if qs.size == 0 or np.any(~np.isfinite(qs)) or np.any(qs <= 0) or np.any(qs >= 1):
        raise InputError(f"quantiles must lie strictly inside (0, 1), got {qs.tolist()}")
    a, b = _beta_params(p, i, j)
    return {
        "a": a,
        "b": b,
        "mean": a / (a + b),
        "quantiles": dict(zip(qs.tolist(), stats.beta.ppf(qs, a, b).tolist())),
    }


def marginal_density_grid(p: ReliabilityPosterior, points: int) -> pd.DataFrame:
    """Beta marginal densities of every cell on ``points`` evenly spaced values in [0, 1]."""
    x = np.linspace(0.0, 1.0, points)
    frames: List[pd.DataFrame] = []
    for i, true_class in enumerate(p.classes):
        for j, predicted in enumerate(p.classes):
            a, b = _beta_params(p, i, j)
            frames.append(pd.DataFrame({
                "true_class": true_class,
                "predicted_class": predicted,
                "theta": x,
                "density": stats.beta.pdf(x, a, b),
            }))
    return pd.concat(frames, ignore_index=True)


def marginal_quantile_table(p: ReliabilityPosterior,
                            quantiles: Sequence[float] = (0.025, 0.5, 0.975)) -> pd.DataFrame:
    records = []
    for true_class in p.classes:
        for predicted in p.classes:
            summary = marginal_density_summary(p, true_class, predicted, quantiles)
            record = {"true_class": true_class, "predicted_class": predicted, "mean": summary["mean"]}
            for q, value in summary["quantiles"].items():
                record[f"q{q:g}"] = value
            records.append(record)
    return pd.DataFrame.from_records(records)
