import os

import numpy as np
import pytest

from config.config import CLASS_LABELS
from src.classifier import ToyClassifier, train
from src.cost_model import CostConfig
from src.reliability import ConfusionMatrix, fit_posterior
from src.synthetic import generate_dataset

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFUSION_CSV = os.path.join(ROOT, "data", "weld_confusion.csv")

# Case-study test results: rows are true classes, columns model outputs
CASE_STUDY_COUNTS = np.array([
    [72, 1, 4, 0],
    [2, 62, 0, 0],
    [7, 0, 37, 1],
    [0, 0, 0, 60],
])

# Published expected cost per radiograph (manual, automated, hybrid)
PUBLISHED_MEANS = {
    "none": {"manual": 350.0, "automated": 92.55, "hybrid": 43.82},
    "cracking": {"manual": 1350.0, "automated": 3155.79, "hybrid": 3440.96},
    "porosity": {"manual": 850.0, "automated": 2424.17, "hybrid": 2282.77},
    "lack_of_penetration": {"manual": 3350.0, "automated": 4501.77, "hybrid": 4825.18},
}

TOY_SEED = 7


@pytest.fixture
def confusion():
    return ConfusionMatrix(CLASS_LABELS, CASE_STUDY_COUNTS)


@pytest.fixture
def posterior(confusion):
    return fit_posterior(confusion)


@pytest.fixture
def costs():
    return CostConfig()


@pytest.fixture(scope="session")
def trained_classifier():
    dataset = generate_dataset(200, seed=TOY_SEED)
    model, history = train(ToyClassifier(seed=TOY_SEED), dataset, epochs=20, lr=0.005, seed=TOY_SEED)
    return model, history
