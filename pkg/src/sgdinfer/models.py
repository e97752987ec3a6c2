"""Loss-gradient models for least squares and logistic regression.

Each model works on single observations (``beta`` of shape ``(d,)``, ``x`` of
shape ``(d,)``, scalar ``y``) and on batches of independent streams
(``beta`` and ``x`` of shape ``(R, d)``, ``y`` of shape ``(R,)``).
"""

from __future__ import annotations

import abc

import numpy as np

from .core import DimensionError, Observation


def sigmoid(u):
    """Logistic function evaluated without overflow for large ``|u|``."""
    u = np.asarray(u, dtype=np.float64)
    e = np.exp(-np.abs(u))
    out = np.where(u >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def _check(beta, x):
    beta = np.asarray(beta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if beta.shape[-1:] != x.shape[-1:]:
        raise DimensionError(f"beta has dimension {beta.shape[-1:]}, x has {x.shape[-1:]}")
    return beta, x


def _check_binary(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("logistic responses must be 0 or 1")
    return y


def _outer(x):
    return x[..., :, None] * x[..., None, :]


class GradientModel(abc.ABC):
    """Per-observation loss with gradient and the two plug-in hooks.

    Random scaling only calls :meth:`gradient`. The plug-in sandwich estimator
    additionally needs :meth:`hessian_contrib` and :meth:`score_outer`.
    """

    name: str = ""

    @abc.abstractmethod
    def loss(self, beta, x, y): ...

    @abc.abstractmethod
    def gradient(self, beta, x, y): ...

    @abc.abstractmethod
    def hessian_contrib(self, beta, x, y): ...

    @abc.abstractmethod
    def score_outer(self, beta, x, y): ...

    def validate_response(self, y):
        return np.asarray(y, dtype=np.float64)


class LinearModel(GradientModel):
    """Squared error ``(y - x'beta)^2 / 2``."""

    name = "linear"

    def residual(self, beta, x, y):
        beta, x = _check(beta, x)
        return np.sum(x * beta, axis=-1) - y

    def loss(self, beta, x, y):
        return 0.5 * self.residual(beta, x, y) ** 2

    def gradient(self, beta, x, y):
        r = self.residual(beta, x, y)
        return np.asarray(x) * np.expand_dims(r, -1)

    def hessian_contrib(self, beta, x, y=None):
        return _outer(np.asarray(x, dtype=np.float64))

    def score_outer(self, beta, x, y):
        r = self.residual(beta, x, y)
        return _outer(np.asarray(x, dtype=np.float64)) * np.expand_dims(r * r, (-1, -2))


class LogisticModel(GradientModel):
    """Negative log-likelihood of a logit model with ``P(y=1|x) = sigmoid(x'beta)``."""

    name = "logistic"

    def validate_response(self, y):
        return _check_binary(y)

    def loss(self, beta, x, y):
        beta, x = _check(beta, x)
        u = np.sum(x * beta, axis=-1)
        return np.logaddexp(0.0, u) - y * u

    def gradient(self, beta, x, y):
        beta, x = _check(beta, x)
        p = sigmoid(np.sum(x * beta, axis=-1))
        return x * np.expand_dims(p - y, -1)

    def hessian_contrib(self, beta, x, y=None):
        beta, x = _check(beta, x)
        p = sigmoid(np.sum(x * beta, axis=-1))
        return _outer(x) * np.expand_dims(p * (1.0 - p), (-1, -2))

    def score_outer(self, beta, x, y):
        beta, x = _check(beta, x)
        r = sigmoid(np.sum(x * beta, axis=-1)) - y
        return _outer(x) * np.expand_dims(r * r, (-1, -2))


LINEAR = LinearModel()
LOGISTIC = LogisticModel()
MODELS = {"linear": LINEAR, "logistic": LOGISTIC}


def get_model(name: str) -> GradientModel:
    try:
        return MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


# Single-observation forms.


def linear_gradient(beta, obs: Observation) -> np.ndarray:
    return LINEAR.gradient(beta, obs.x, obs.y)


def logistic_gradient(beta, obs: Observation) -> np.ndarray:
    return LOGISTIC.gradient(beta, obs.x, _check_binary(obs.y))


def linear_hessian_contrib(obs: Observation) -> np.ndarray:
    return LINEAR.hessian_contrib(None, obs.x)


def linear_score_outer(beta, obs: Observation) -> np.ndarray:
    return LINEAR.score_outer(beta, obs.x, obs.y)


def logistic_hessian_contrib(beta, obs: Observation) -> np.ndarray:
    return LOGISTIC.hessian_contrib(beta, obs.x)


def logistic_score_outer(beta, obs: Observation) -> np.ndarray:
    return LOGISTIC.score_outer(beta, obs.x, _check_binary(obs.y))
