"""Counterfactual images, input saliency and class-activation maps for the toy classifier."""

from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd

from src.classifier import ToyClassifier
from utils.custom_exception import InputError
from utils.logger import get_logger

logger = get_logger(__name__)

SALIENCY_PLAIN = "plain"
SALIENCY_CAM = "cam"


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    values: np.ndarray
    method: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if self.method not in (SALIENCY_PLAIN, SALIENCY_CAM):
            raise InputError(f"unknown saliency method {self.method!r}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InputError("saliency values must be finite and non-negative")
        object.__setattr__(self, "values", values)


@dataclass
class CounterfactualTrace:
    initial: np.ndarray
    target: int
    eta: float
    losses: List[float] = field(default_factory=list)
    final: np.ndarray = None
    final_prediction: int = -1
    converged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.losses) - 1, 0)

    def loss_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"iteration": np.arange(len(self.losses)), "loss": self.losses})


def _single(classifier: ToyClassifier, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (classifier.image_size, classifier.image_size):
        raise InputError(f"expected a single {classifier.image_size}x{classifier.image_size} image, got {z.shape}")
    return z


def _check_class(classifier: ToyClassifier, c: int) -> int:
    if not 0 <= int(c) < len(classifier.classes):
        raise InputError(f"class index {c} out of range for {len(classifier.classes)} classes")
    return int(c)


def counterfactual(classifier: ToyClassifier, z: np.ndarray, y_cf: int, eta: float,
                   max_iters: int = 500, tol: float = 0.05) -> CounterfactualTrace:
    """Gradient descent on the input pixels towards class ``y_cf``.

    Each step is ``z <- clamp(z - eta * dL/dz, 0, 1)`` with cross-entropy
    against ``y_cf``. Stops once the prediction is ``y_cf`` and the loss is
    below ``tol``, or after ``max_iters`` steps. ``losses[i]`` is the loss of
    iterate ``i``, starting from the input image.
    """
    z = _single(classifier, z)
    y_cf = _check_class(classifier, y_cf)
    if eta < 0:
        raise InputError(f"learning rate must be >= 0, got {eta}")

    trace = CounterfactualTrace(initial=z.copy(), target=y_cf, eta=float(eta))
    current = z.copy()
    loss, grad = classifier.loss_input_gradient(current, y_cf)
    trace.losses.append(loss)
    prediction = int(classifier.predict(current)[0])

    if prediction == y_cf:
        logger.info("Counterfactual target already predicted; no iterations run")
        trace.final, trace.final_prediction, trace.converged = current, prediction, True
        return trace

    for _ in range(max_iters):
        current = np.clip(current - eta * grad[0], 0.0, 1.0)
        loss, grad = classifier.loss_input_gradient(current, y_cf)
        trace.losses.append(loss)
        prediction = int(classifier.predict(current)[0])
        if prediction == y_cf and loss < tol:
            trace.converged = True
            break

    trace.final, trace.final_prediction = current, prediction
    if not trace.converged:
        logger.warning(f"Counterfactual did not converge in {max_iters} iterations (final loss {loss:.4f})")
    return trace


def calibrated_eta(classifier: ToyClassifier, z: np.ndarray, y_cf: int, max_step: float = 0.05) -> float:
    """Learning rate whose first step changes no pixel by more than ``max_step``."""
    if max_step <= 0:
        raise InputError(f"max_step must be > 0, got {max_step}")
    _, grad = classifier.loss_input_gradient(_single(classifier, z), _check_class(classifier, y_cf))
    largest = float(np.abs(grad).max())
    if largest == 0.0:
        logger.warning("Loss gradient is zero at the input; counterfactual search cannot move")
        return 0.0
    return max_step / largest


def saliency(classifier: ToyClassifier, z: np.ndarray, c: int) -> SaliencyMap:
    """Absolute gradient of the class-``c`` score with respect to every pixel."""
    z = _single(classifier, z)
    grad = classifier.score_input_gradient(z, _check_class(classifier, c))[0]
    return SaliencyMap(np.abs(grad), SALIENCY_PLAIN)


def upsample_nearest(grid: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbour resize of a square grid: output ``(i, j)`` reads ``(i*h//size, j*w//size)``."""
    rows = (np.arange(size) * grid.shape[0]) // size
    cols = (np.arange(size) * grid.shape[1]) // size
    return grid[np.ix_(rows, cols)]


def min_max(values: np.ndarray) -> np.ndarray:
    low, high = float(values.min()), float(values.max())
    if high - low <= 0:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def class_activation_map(classifier: ToyClassifier, z: np.ndarray, c: int) -> SaliencyMap:
    """Gradient-weighted map over the final convolution activations, resized to the input."""
    z = _single(classifier, z)
    activations, grads = classifier.activation_gradient(z, _check_class(classifier, c))
    weights = grads[0].mean(axis=(1, 2))
    cam = np.maximum(np.einsum("f,fij->ij", weights, activations[0]), 0.0)
    return SaliencyMap(min_max(upsample_nearest(cam, classifier.image_size)), SALIENCY_CAM)


def top_mass_in_mask(values: np.ndarray, mask: np.ndarray, fraction: float = 0.05) -> float:
    """Share of the saliency mass of the top ``fraction`` of pixels that falls inside ``mask``."""
    flat = values.ravel()
    k = max(1, int(round(fraction * flat.size)))
    top = np.argsort(flat)[::-1][:k]
    total = flat[top].sum()
    if total <= 0:
        return 0.0
    return float(flat[top][mask.ravel()[top]].sum() / total)
