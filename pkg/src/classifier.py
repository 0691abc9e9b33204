"""Small convolutional classifier written directly in NumPy, with hand-written gradients."""

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from config.config import CLASS_LABELS
from src.rng import STREAM_BATCH_ORDER, STREAM_CLASSIFIER_INIT, substream
from src.synthetic import SyntheticRadiograph, stack
from utils.custom_exception import InputError, NumericalError
from utils.logger import get_logger

logger = get_logger(__name__)

FORMAT_MAGIC = "TOYCLF"
FORMAT_VERSION = 2
PARAMETER_NAMES = ("conv_w", "conv_b", "out_w", "out_b")

DEFAULT_INPUT_CENTER = 0.5
DEFAULT_INPUT_SCALE = 0.25
# In standardised units; keeps filters silent on plain background
CONV_BIAS_INIT = -1.0


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    picked = probs[np.arange(len(targets)), targets]
    return float(-np.mean(np.log(np.clip(picked, 1e-300, None))))


@dataclass
class ForwardCache:
    x: np.ndarray
    patches: np.ndarray
    conv: np.ndarray
    activations: np.ndarray
    flat: np.ndarray
    logits: np.ndarray


class ToyClassifier:
    """Conv(3x3, F) -> ReLU -> AvgPool(2) -> Dense(K) -> softmax."""

    def __init__(self, image_size: int = 32, filters: int = 8, classes: Sequence[str] = CLASS_LABELS,
                 seed: int = 0, zero_head: bool = False, input_center: float = DEFAULT_INPUT_CENTER,
                 input_scale: float = DEFAULT_INPUT_SCALE):
        if (image_size - 2) % 2:
            raise InputError("image_size - 2 must be even for 2x2 pooling")
        self.image_size = image_size
        self.filters = filters
        self.classes = tuple(classes)
        self.conv_size = image_size - 2
        self.pool_size = self.conv_size // 2
        self.input_center = float(input_center)
        self.input_scale = float(input_scale)

        rng = substream(seed, STREAM_CLASSIFIER_INIT)
        fan_in = filters * self.pool_size ** 2
        k = len(self.classes)
        self.params: Dict[str, np.ndarray] = {
            "conv_w": rng.normal(0.0, math.sqrt(2.0 / 9.0), (filters, 3, 3)),
            "conv_b": np.full(filters, CONV_BIAS_INIT),
            "out_w": np.zeros((fan_in, k)) if zero_head else rng.normal(0.0, math.sqrt(1.0 / fan_in), (fan_in, k)),
            "out_b": np.zeros(k),
        }

    def copy(self) -> "ToyClassifier":
        return copy.deepcopy(self)

    def fit_normalisation(self, x: np.ndarray) -> None:
        """Centre on the median pixel (the background) and scale by the pixel spread."""
        x = np.asarray(x, dtype=float)
        scale = float(np.std(x))
        self.input_center = float(np.median(x))
        self.input_scale = scale if math.isfinite(scale) and scale > 1e-12 else 1.0

    # forward pass

    def _batch(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 2:
            z = z[np.newaxis]
        if z.shape[1:] != (self.image_size, self.image_size):
            raise InputError(f"expected images of shape {(self.image_size, self.image_size)}, got {z.shape[1:]}")
        return (z - self.input_center) / self.input_scale

    def _conv(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        patches = sliding_window_view(x, (3, 3), axis=(1, 2))
        conv = np.einsum("nijab,fab->nfij", patches, self.params["conv_w"])
        return patches, conv + self.params["conv_b"][np.newaxis, :, np.newaxis, np.newaxis]

    def _pool(self, activations: np.ndarray) -> np.ndarray:
        n, f = activations.shape[:2]
        p = self.pool_size
        return activations.reshape(n, f, p, 2, p, 2).mean(axis=(3, 5))

    def _head(self, activations: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        flat = self._pool(activations).reshape(activations.shape[0], -1)
        return flat, flat @ self.params["out_w"] + self.params["out_b"]

    def forward_cache(self, z: np.ndarray) -> ForwardCache:
        x = self._batch(z)
        patches, conv = self._conv(x)
        activations = np.maximum(conv, 0.0)
        flat, logits = self._head(activations)
        return ForwardCache(x, patches, conv, activations, flat, logits)

    def logits(self, z: np.ndarray) -> np.ndarray:
        return self.forward_cache(z).logits

    def forward(self, z: np.ndarray) -> np.ndarray:
        """Class probabilities, shape ``(N, K)``."""
        return softmax(self.logits(z))

    def predict(self, z: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(z), axis=1)

    def logits_from_activations(self, activations: np.ndarray) -> np.ndarray:
        """Class scores computed from final convolution activations ``(N, F, H', W')``."""
        return self._head(np.asarray(activations, dtype=float))[1]

    # backward pass

    def _backward_head(self, cache: ForwardCache, dlogits: np.ndarray):
        grads = {
            "out_w": cache.flat.T @ dlogits,
            "out_b": dlogits.sum(axis=0),
        }
        dflat = dlogits @ self.params["out_w"].T
        n = dlogits.shape[0]
        dpool = dflat.reshape(n, self.filters, self.pool_size, self.pool_size)
        dactivations = np.repeat(np.repeat(dpool, 2, axis=2), 2, axis=3) / 4.0
        return grads, dactivations

    def _backward_conv(self, cache: ForwardCache, dactivations: np.ndarray, grads: Dict[str, np.ndarray],
                       need_input: bool) -> Optional[np.ndarray]:
        dconv = dactivations * (cache.conv > 0)
        grads["conv_w"] = np.einsum("nfij,nijab->fab", dconv, cache.patches)
        grads["conv_b"] = dconv.sum(axis=(0, 2, 3))
        if not need_input:
            return None
        dx = np.zeros_like(cache.x)
        c = self.conv_size
        w = self.params["conv_w"]
        for a in range(3):
            for b in range(3):
                dx[:, a:a + c, b:b + c] += np.einsum("nfij,f->nij", dconv, w[:, a, b])
        # chain rule through the standardisation
        return dx / self.input_scale

    def loss_and_gradients(self, z: np.ndarray, targets: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean cross-entropy over the batch and its gradient for every parameter."""
        cache = self.forward_cache(z)
        targets = np.asarray(targets, dtype=np.int64)
        probs = softmax(cache.logits)
        loss = cross_entropy(probs, targets)
        dlogits = probs.copy()
        dlogits[np.arange(len(targets)), targets] -= 1.0
        dlogits /= len(targets)
        grads, dactivations = self._backward_head(cache, dlogits)
        self._backward_conv(cache, dactivations, grads, need_input=False)
        return loss, grads

    def score_input_gradient(self, z: np.ndarray, c: int) -> np.ndarray:
        """Gradient of the class-``c`` score (logit) with respect to the input pixels."""
        cache = self.forward_cache(z)
        dlogits = np.zeros_like(cache.logits)
        dlogits[:, c] = 1.0
        grads, dactivations = self._backward_head(cache, dlogits)
        return self._backward_conv(cache, dactivations, grads, need_input=True)

    def loss_input_gradient(self, z: np.ndarray, target: int) -> Tuple[float, np.ndarray]:
        """Cross-entropy against ``target`` and its gradient with respect to the input."""
        cache = self.forward_cache(z)
        probs = softmax(cache.logits)
        targets = np.full(probs.shape[0], target, dtype=np.int64)
        loss = cross_entropy(probs, targets)
        dlogits = probs.copy()
        dlogits[:, target] -= 1.0
        dlogits /= probs.shape[0]
        grads, dactivations = self._backward_head(cache, dlogits)
        return loss, self._backward_conv(cache, dactivations, grads, need_input=True)

    def activation_gradient(self, z: np.ndarray, c: int) -> Tuple[np.ndarray, np.ndarray]:
        """Final convolution activations and the gradient of the class-``c`` score with respect to them."""
        cache = self.forward_cache(z)
        dlogits = np.zeros_like(cache.logits)
        dlogits[:, c] = 1.0
        _, dactivations = self._backward_head(cache, dlogits)
        return cache.activations, dactivations

    # persistence

    def save(self, path: str) -> None:
        """Versioned text format: magic/version line, JSON manifest line, then row-major values."""
        manifest = {
            "image_size": self.image_size, "filters": self.filters, "classes": list(self.classes),
            "input_center": self.input_center, "input_scale": self.input_scale,
            "shapes": {name: list(self.params[name].shape) for name in PARAMETER_NAMES},
        }
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{FORMAT_MAGIC} {FORMAT_VERSION}\n")
            f.write(json.dumps(manifest, sort_keys=True) + "\n")
            for name in PARAMETER_NAMES:
                f.write("\n".join(f"{v:.17g}" for v in self.params[name].ravel()) + "\n")

    @classmethod
    def load(cls, path: str) -> "ToyClassifier":
        try:
            with open(path, encoding="utf-8") as f:
                header = f.readline().split()
                if len(header) != 2 or header[0] != FORMAT_MAGIC:
                    raise InputError("not a toy classifier file", source=path, line=1)
                if int(header[1]) != FORMAT_VERSION:
                    raise InputError(f"unsupported format version {header[1]}", source=path, line=1)
                manifest = json.loads(f.readline())
                values = np.array([float(line) for line in f if line.strip()])
        except FileNotFoundError:
            raise InputError("classifier file not found", source=path)
        except ValueError as e:
            raise InputError(f"malformed classifier file: {e}", source=path)

        try:
            model = cls(manifest["image_size"], manifest["filters"], manifest["classes"],
                        input_center=manifest["input_center"], input_scale=manifest["input_scale"])
            shapes = {name: tuple(manifest["shapes"][name]) for name in PARAMETER_NAMES}
        except (KeyError, TypeError) as e:
            raise InputError(f"incomplete classifier manifest: {e}", source=path, line=2)
        offset = 0
        for name in PARAMETER_NAMES:
            shape = shapes[name]
            size = int(np.prod(shape))
            if offset + size > values.size:
                raise InputError(f"parameter block {name} is truncated", source=path)
            model.params[name] = values[offset:offset + size].reshape(shape)
            offset += size
        if offset != values.size:
            raise InputError("trailing values after the last parameter block", source=path)
        return model


class AdamOptimizer:
    """Adam over a dict of parameter arrays."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad ** 2
            m_hat = self.m[name] / (1 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1 - self.beta2 ** self.t)
            self.params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainingHistory:
    epochs: List[int] = field(default_factory=list)
    loss: List[float] = field(default_factory=list)
    train_accuracy: List[float] = field(default_factory=list)
    holdout_accuracy: List[Optional[float]] = field(default_factory=list)
    final_holdout_accuracy: Optional[float] = None
    holdout_size: int = 0

    def to_records(self) -> List[Dict]:
        return [
            {"epoch": e, "loss": l, "train_accuracy": a, "holdout_accuracy": h}
            for e, l, a, h in zip(self.epochs, self.loss, self.train_accuracy, self.holdout_accuracy)
        ]


def accuracy(classifier: ToyClassifier, x: np.ndarray, y: np.ndarray) -> Optional[float]:
    if len(y) == 0:
        return None
    return float(np.mean(classifier.predict(x) == y))


def holdout_split(n: int, seed: int, fraction: float = 0.2) -> Tuple[np.ndarray, np.ndarray]:
    order = substream(seed, STREAM_BATCH_ORDER, 0, 0).permutation(n)
    n_holdout = int(round(n * fraction)) if n >= 5 else 0
    return np.sort(order[n_holdout:]), np.sort(order[:n_holdout])


def train(classifier: ToyClassifier, dataset: Sequence[SyntheticRadiograph], epochs: int, lr: float,
          seed: int, batch_size: int = 32, holdout_fraction: float = 0.2) -> Tuple[ToyClassifier, TrainingHistory]:
    """Mini-batch Adam on cross-entropy; returns a trained copy and the per-epoch curve.

    Input standardisation is refitted on the training split before the first epoch.
    """
    if not dataset:
        raise InputError("training dataset is empty")
    if epochs < 0:
        raise InputError(f"epochs must be >= 0, got {epochs}")
    model = classifier.copy()
    x, y = stack(dataset, model.classes)
    train_idx, holdout_idx = holdout_split(len(y), seed, holdout_fraction)
    model.fit_normalisation(x[train_idx])
    optimizer = AdamOptimizer(model.params, lr=lr)
    history = TrainingHistory(holdout_size=len(holdout_idx))

    for epoch in range(1, epochs + 1):
        order = substream(seed, STREAM_BATCH_ORDER, 1, epoch).permutation(train_idx)
        losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            loss, grads = model.loss_and_gradients(x[batch], y[batch])
            if not math.isfinite(loss):
                logger.error(f"Training diverged at epoch {epoch} (loss={loss})")
                raise NumericalError(f"training diverged at epoch {epoch}: non-finite loss {loss}")
            optimizer.step(grads)
            losses.append(loss * len(batch))
        history.epochs.append(epoch)
        history.loss.append(float(sum(losses) / len(order)))
        history.train_accuracy.append(accuracy(model, x[train_idx], y[train_idx]))
        history.holdout_accuracy.append(accuracy(model, x[holdout_idx], y[holdout_idx]))
        logger.info(f"Epoch {epoch}: loss={history.loss[-1]:.4f} holdout_acc={history.holdout_accuracy[-1]}")

    history.final_holdout_accuracy = accuracy(model, x[holdout_idx], y[holdout_idx])
    return model, history
