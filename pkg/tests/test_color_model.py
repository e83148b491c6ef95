import numpy as np
import pytest

from gcpw.color_model import (
    SMOOTHNESS_SAMPLES,
    ColorModel,
    apply,
    identity_model,
    model_from_dict,
    model_to_dict,
    pairwise_smoothness,
)
from gcpw.errors import SchemaError


def test_identity_model():
    m = identity_model(32, 32)
    assert m.gains.size == 3072
    assert (m.gains == 1).all() and (m.biases == 0).all()
    assert identity_model(2, 5, 1).gains.shape == (2, 5, 1)


@pytest.mark.parametrize("g,b,x,expected", [(1, 0, 0.7, 0.7), (1.2, 0.05, 0.5, 0.65), (0.0, 0.3, 0.9, 0.3)])
def test_apply(g, b, x, expected):
    model = ColorModel(np.full((1, 1, 1), g), np.full((1, 1, 1), b))
    assert apply(model, (0, 0), 0, x) == pytest.approx(expected, abs=1e-15)


def test_apply_is_unclamped_and_checks_index():
    model = ColorModel(np.full((1, 1, 1), 2.0), np.zeros((1, 1, 1)))
    assert model.apply((0, 0), 0, 0.9) == pytest.approx(1.8)
    with pytest.raises(IndexError):
        model.apply((1, 0), 0, 0.5)


def test_smoothness_samples():
    assert SMOOTHNESS_SAMPLES.tolist() == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


def test_pairwise_smoothness():
    assert pairwise_smoothness((1.3, 0.1), (1.3, 0.1)) == 0.0
    assert pairwise_smoothness((1.0, 0.0), (1.0, 0.1)) == pytest.approx(11 * 0.01, abs=1e-12)
    assert pairwise_smoothness((1.0, 0.0), (2.0, 0.0)) == pytest.approx(3.85, abs=1e-12)


def test_model_validation_and_roundtrip(rng):
    with pytest.raises(ValueError):
        ColorModel(np.ones((2, 2, 3)), np.ones((2, 3, 3)))
    with pytest.raises(ValueError):
        ColorModel(np.full((1, 1, 1), np.nan), np.zeros((1, 1, 1)))
    model = ColorModel(rng.normal(size=(3, 4, 3)), rng.normal(size=(3, 4, 3)))
    back = model_from_dict(model_to_dict(model))
    assert (back.gains == model.gains).all() and (back.biases == model.biases).all()
    with pytest.raises(SchemaError):
        model_from_dict({"m": 1})
