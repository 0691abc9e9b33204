import numpy as np
import pytest

from config.config import CLASS_LABELS
from src.synthetic import SyntheticRadiograph, generate_dataset, make_radiograph, stack
from utils.custom_exception import InputError


def test_no_anomaly_has_empty_mask():
    image = make_radiograph("none", seed=1, index=0)
    assert not image.anomaly_mask.any()


@pytest.mark.parametrize("index", range(5))
def test_lack_of_penetration_band_spans_width(index):
    mask = make_radiograph("lack_of_penetration", seed=3, index=index).anomaly_mask
    rows = np.flatnonzero(mask.any(axis=1))
    assert 4 <= len(rows) <= 5
    assert np.all(np.diff(rows) == 1)
    assert mask[rows].all()


@pytest.mark.parametrize("label", ["cracking", "porosity"])
def test_anomalies_are_darker(label):
    image = make_radiograph(label, seed=5, index=2)
    assert image.anomaly_mask.any()
    assert image.pixels[image.anomaly_mask].mean() < image.pixels[~image.anomaly_mask].mean() - 0.2


def test_background_variation_is_small_next_to_anomaly_depth():
    background = make_radiograph("none", seed=4, index=0).pixels
    assert background.std() < 0.03
    assert abs(np.median(background) - 0.65) < 0.02


def test_dataset_is_balanced_and_seeded():
    first = generate_dataset(3, seed=11)
    second = generate_dataset(3, seed=11)
    assert [r.label for r in first].count("porosity") == 3
    assert len(first) == 12
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.pixels, b.pixels)
        np.testing.assert_array_equal(a.anomaly_mask, b.anomaly_mask)
    other = generate_dataset(3, seed=12)
    assert not np.array_equal(first[0].pixels, other[0].pixels)


def test_pixels_in_unit_interval():
    for image in generate_dataset(4, seed=2):
        assert image.pixels.min() >= 0 and image.pixels.max() <= 1


def test_stack_shapes():
    x, y = stack(generate_dataset(2, seed=0))
    assert x.shape == (8, 32, 32)
    assert list(y[:4]) == [0, 1, 2, 3]


def test_validation():
    with pytest.raises(InputError):
        generate_dataset(0, seed=1)
    with pytest.raises(InputError):
        make_radiograph("slag", seed=1, index=0)
    with pytest.raises(InputError):
        SyntheticRadiograph(np.full((4, 4), 0.5), "cracking", np.zeros((4, 4), dtype=bool))
    with pytest.raises(InputError):
        SyntheticRadiograph(np.full((4, 4), 1.5), "none", np.zeros((4, 4), dtype=bool))
    with pytest.raises(InputError):
        SyntheticRadiograph(np.full((4, 4), np.nan), "none", np.zeros((4, 4), dtype=bool))
    assert CLASS_LABELS[0] == "none"
