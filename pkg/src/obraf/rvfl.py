"""Random vector functional link network.

A single hidden layer with random, fixed input weights; the output layer sees
the hidden activations, the raw inputs (direct links) and a constant bias, and
is fit by ridge regression onto one-hot targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ridge_solve

ACTIVATIONS = ("radbas", "sine", "tribas")
HIDDEN_RANGE = (3, 203)
RIDGE_EXPONENTS = (-5, 14)
SCALE_EXPONENTS = (-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5)


@dataclass(frozen=True)
class RvflConfig:
    hidden_neurons: int
    ridge_exponent: int  # lambda = 2 ** -ridge_exponent
    activation: str
    scale_exponent: float  # weights ~ U[-S, S], biases ~ U[0, S], S = 2 ** scale_exponent

    def __post_init__(self):
        lo, hi = HIDDEN_RANGE
        if not lo <= self.hidden_neurons <= hi:
            raise ValueError(f"hidden_neurons must be in [{lo}, {hi}]")
        lo, hi = RIDGE_EXPONENTS
        if not lo <= self.ridge_exponent <= hi:
            raise ValueError(f"ridge_exponent must be in [{lo}, {hi}]")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.scale_exponent not in SCALE_EXPONENTS:
            raise ValueError(f"scale_exponent must be one of {SCALE_EXPONENTS}")

    @property
    def ridge(self) -> float:
        return 2.0 ** -self.ridge_exponent

    @property
    def scale(self) -> float:
        return 2.0**self.scale_exponent


@dataclass(frozen=True)
class RvflModel:
    hidden_weights: np.ndarray  # d x N
    hidden_bias: np.ndarray  # N
    output_weights: np.ndarray  # (N + d + 1) x C, rows ordered [hidden | direct | bias]
    config: RvflConfig

    @property
    def num_classes(self) -> int:
        return self.output_weights.shape[1]

    def design(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.hidden_weights.shape[0]:
            raise ValueError(f"model expects {self.hidden_weights.shape[0]} features, got {X.shape[1]}")
        return design_matrix(X, self.hidden_weights, self.hidden_bias, self.config.activation)

    def to_dict(self) -> dict:
        c = self.config
        return {
            "config": [c.hidden_neurons, c.ridge_exponent, c.activation, c.scale_exponent],
            "hidden_weights": self.hidden_weights.tolist(),
            "hidden_bias": self.hidden_bias.tolist(),
            "output_weights": self.output_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RvflModel:
        n, r, a, s = d["config"]
        return cls(
            np.asarray(d["hidden_weights"], dtype=float).reshape(-1, n),
            np.asarray(d["hidden_bias"], dtype=float),
            np.asarray(d["output_weights"], dtype=float),
            RvflConfig(int(n), int(r), a, float(s)),
        )


def sample_config(rng: np.random.Generator) -> RvflConfig:
    """Draw every hyperparameter uniformly from its grid."""
    return RvflConfig(
        hidden_neurons=int(rng.integers(HIDDEN_RANGE[0], HIDDEN_RANGE[1] + 1)),
        ridge_exponent=int(rng.integers(RIDGE_EXPONENTS[0], RIDGE_EXPONENTS[1] + 1)),
        activation=ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))],
        scale_exponent=SCALE_EXPONENTS[int(rng.integers(len(SCALE_EXPONENTS)))],
    )


def activate(values, kind: str) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if kind == "radbas":
        return np.exp(-(x**2))
    if kind == "sine":
        return np.sin(x)
    if kind == "tribas":
        return np.maximum(0.0, 1.0 - np.abs(x))
    raise ValueError(f"unknown activation {kind!r}")


def design_matrix(X, W, b, kind) -> np.ndarray:
    H = activate(X @ W + b, kind)
    return np.hstack([H, X, np.ones((X.shape[0], 1))])


def draw_hidden(d: int, config: RvflConfig, rng: np.random.Generator):
    S = config.scale
    W = rng.uniform(-S, S, size=(d, config.hidden_neurons))
    b = rng.uniform(0.0, S, size=config.hidden_neurons)
    return W, b


def train_rvfl(X, y, num_classes: int, config: RvflConfig, rng: np.random.Generator,
               form: str = "auto") -> RvflModel:
    """Fit an RVFL on normalized features ``X`` and integer labels ``y``.

    Hidden parameters are the first draws taken from ``rng``, so they depend
    only on the generator state, ``config`` and the input dimension.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if num_classes < 2:
        raise ValueError("RVFL needs at least two classes")
    W, b = draw_hidden(X.shape[1], config, rng)
    D = design_matrix(X, W, b, config.activation)
    Y = np.zeros((len(y), num_classes))
    Y[np.arange(len(y)), y] = 1.0
    sol = ridge_solve(D, Y, config.ridge, form=form)
    return RvflModel(W, b, sol.weights, config)


def score(model: RvflModel, X) -> np.ndarray:
    """Raw class scores; a single vector in gives a single vector out."""
    X = np.asarray(X, dtype=float)
    out = model.design(X) @ model.output_weights
    return out[0] if X.ndim == 1 else out


def predict(model: RvflModel, X) -> np.ndarray:
    return np.argmax(score(model, X), axis=-1)


def top_two(scores) -> tuple[int, int] | np.ndarray:
    """Indices of the largest and second-largest scores, ties to the lower index.

    For a (n, C) matrix returns an (n, 2) array.
    """
    s = np.asarray(scores, dtype=float)
    if s.shape[-1] < 2:
        raise ValueError("need at least two classes")
    # stable sort on negated scores keeps lower indices first among ties
    order = np.argsort(-s, axis=-1, kind="stable")[..., :2]
    if s.ndim == 1:
        return int(order[0]), int(order[1])
    return order
