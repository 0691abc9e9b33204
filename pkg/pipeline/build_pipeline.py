from typing import List, Optional, Tuple

import numpy as np

from config.config import CLASS_LABELS, DEFAULT_SEED, LACK_OF_PENETRATION, NO_ANOMALY
from pipeline import run_stage
from src.classifier import ToyClassifier, TrainingHistory, train
from src.explain import (CounterfactualTrace, SaliencyMap, calibrated_eta, class_activation_map, counterfactual,
                         saliency)
from src.synthetic import SyntheticRadiograph, generate_dataset, make_radiograph
from utils.custom_exception import InputError
from utils.logger import get_logger

logger = get_logger(__name__)


def _class_index(label: str) -> int:
    if label not in CLASS_LABELS:
        raise InputError(f"unknown class label {label!r}; expected one of {list(CLASS_LABELS)}")
    return CLASS_LABELS.index(label)


class ExplainabilityPipeline:
    """Synthetic radiographs, toy classifier training and explanation artefacts."""

    def __init__(self, seed: int = DEFAULT_SEED, model_path: Optional[str] = None):
        self.seed = seed
        self.model_path = model_path
        self._classifier: Optional[ToyClassifier] = None

    @property
    def classifier(self) -> ToyClassifier:
        if self._classifier is None:
            if self.model_path is None:
                raise InputError("no trained classifier; pass --model or run 'toy train' first")
            self._classifier = ToyClassifier.load(self.model_path)
            logger.info(f"Loaded toy classifier from {self.model_path}")
        return self._classifier

    def generate(self, n_per_class: int) -> List[SyntheticRadiograph]:
        return run_stage("synthetic dataset generation", generate_dataset, n_per_class, self.seed)

    def train(self, n_per_class: int, epochs: int, lr: float,
              batch_size: int = 32) -> Tuple[ToyClassifier, TrainingHistory]:
        dataset = self.generate(n_per_class)
        model, history = run_stage("classifier training", train, ToyClassifier(seed=self.seed), dataset,
                                   epochs, lr, self.seed, batch_size)
        self._classifier = model
        if self.model_path is not None:
            model.save(self.model_path)
            logger.info(f"Saved toy classifier to {self.model_path}")
        return model, history

    def image(self, label: str = LACK_OF_PENETRATION, index: int = 0) -> SyntheticRadiograph:
        """Test image drawn under ``seed + 1`` so it is never part of the training set."""
        return make_radiograph(label, self.seed + 1, index)

    def counterfactual(self, image: SyntheticRadiograph, target: str = NO_ANOMALY, eta: Optional[float] = None,
                       max_iters: int = 500, tol: float = 0.05, max_step: float = 0.05) -> CounterfactualTrace:
        """Without ``eta``, the rate is chosen so the first step moves no pixel more than ``max_step``."""
        y_cf = _class_index(target)
        if eta is None:
            eta = calibrated_eta(self.classifier, image.pixels, y_cf, max_step)
            logger.info(f"Calibrated counterfactual learning rate {eta:.4g}")
        return run_stage("counterfactual search", counterfactual, self.classifier, image.pixels,
                         y_cf, eta, max_iters, tol)

    def saliency(self, image: SyntheticRadiograph, label: Optional[str] = None) -> SaliencyMap:
        c = _class_index(label or image.label)
        return run_stage("saliency", saliency, self.classifier, image.pixels, c)

    def cam(self, image: SyntheticRadiograph, label: Optional[str] = None) -> SaliencyMap:
        c = _class_index(label or image.label)
        return run_stage("class activation map", class_activation_map, self.classifier, image.pixels, c)

    def predicted_label(self, pixels: np.ndarray) -> str:
        return self.classifier.classes[int(self.classifier.predict(pixels)[0])]
