"""Per-quad affine colour model mapping source intensities to the target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError

# Intensities at which neighbouring quad models are compared.
SMOOTHNESS_SAMPLES = np.round(np.arange(11) * 0.1, 10)


@dataclass
class ColorModel:
    gains: np.ndarray  # (m, n, channels)
    biases: np.ndarray  # (m, n, channels)

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.gains.ndim != 3 or self.gains.shape != self.biases.shape:
            raise ValueError("gains and biases must both have shape (m, n, channels)")
        if not (np.all(np.isfinite(self.gains)) and np.all(np.isfinite(self.biases))):
            raise ValueError("colour model contains non-finite values")

    @property
    def rows(self) -> int:
        return self.gains.shape[0]

    @property
    def cols(self) -> int:
        return self.gains.shape[1]

    @property
    def channels(self) -> int:
        return self.gains.shape[2]

    def copy(self) -> "ColorModel":
        return ColorModel(self.gains.copy(), self.biases.copy())

    def apply(self, quad: tuple[int, int], channel: int, x):
        """g * x + b for one quad and channel; deliberately not clamped."""
        r, c = quad
        if not (0 <= r < self.rows and 0 <= c < self.cols and 0 <= channel < self.channels):
            raise IndexError(f"quad {quad} / channel {channel} out of range")
        return self.gains[r, c, channel] * x + self.biases[r, c, channel]


def identity_model(m: int, n: int, channels: int = 3) -> ColorModel:
    return ColorModel(np.ones((m, n, channels)), np.zeros((m, n, channels)))


def apply(model: ColorModel, quad: tuple[int, int], channel: int, x):
    return model.apply(quad, channel, x)


def pairwise_smoothness(model_a, model_b, samples=SMOOTHNESS_SAMPLES) -> float:
    """Sum over samples of ((g x + b) - (g' x + b'))^2 for two (g, b) pairs."""
    g, b = model_a
    g2, b2 = model_b
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("need at least one intensity sample")
    d = (g * x + b) - (g2 * x + b2)
    return float(np.sum(d * d))


def model_to_dict(model: ColorModel) -> dict:
    return {
        "m": model.rows,
        "n": model.cols,
        "channels": model.channels,
        "gains": model.gains.ravel().tolist(),
        "biases": model.biases.ravel().tolist(),
    }


def model_from_dict(d: dict) -> ColorModel:
    try:
        shape = (int(d["m"]), int(d["n"]), int(d["channels"]))
        gains = np.asarray(d["gains"], dtype=np.float64).reshape(shape)
        biases = np.asarray(d["biases"], dtype=np.float64).reshape(shape)
        return ColorModel(gains, biases)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid colour model document: {exc}") from exc
