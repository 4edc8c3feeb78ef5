"""Binary logistic regression fitted by full-batch gradient descent.

Features are z-scored with training statistics. The objective is the mean
log-loss plus ``l2 / 2 * ||w||^2`` on the weights (not the intercept); the
penalty keeps the optimum finite on separable data.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, final_loss: float):
        super().__init__(f"{message} (final loss {final_loss:.6g})")
        self.final_loss = final_loss


@dataclass(frozen=True)
class LogisticParams:
    l2: float = 1e-3
    tol: float = 1e-6
    max_iter: int = 200_000
    seed: int = 0


def loss_and_gradient(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Objective and gradient at ``theta = [intercept, w...]`` for design ``Z``."""
    b, w = theta[0], theta[1:]
    margin = Z @ w + b
    # log(1 + e^m) - y m, computed stably
    loss = float(np.mean(np.logaddexp(0.0, margin) - y * margin) + 0.5 * l2 * (w @ w))
    residual = 0.5 * (1.0 + np.tanh(0.5 * margin)) - y
    grad = np.empty_like(theta)
    grad[0] = residual.mean()
    grad[1:] = Z.T @ residual / len(y) + l2 * w
    return loss, grad


class LogisticRegression:
    def __init__(self, params: LogisticParams | None = None):
        self.params = params or LogisticParams()
        self.mean: np.ndarray | None = None
        self.scale: np.ndarray | None = None
        self.theta: np.ndarray | None = None
        self.n_iter = 0
        self.final_loss = float("nan")

    def _standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def fit(self, X, y) -> "LogisticRegression":
        p = self.params
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if len(np.unique(y)) < 2:
            raise ValueError("training data must contain both classes")
        self.mean = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale = np.where(scale > 0, scale, 1.0)
        Z = self._standardize(X)

        # step 1/L with L bounding the Hessian: 0.25 * ||[1 Z]||_2^2 / n + l2
        design_norm = np.linalg.norm(np.column_stack([np.ones(len(Z)), Z]), 2)
        step = 1.0 / (0.25 * design_norm**2 / len(Z) + p.l2)
        rng = np.random.default_rng(p.seed)
        theta = rng.normal(scale=0.01, size=Z.shape[1] + 1)
        loss, grad = loss_and_gradient(theta, Z, y, p.l2)
        for it in range(1, p.max_iter + 1):
            if np.max(np.abs(grad)) < p.tol:
                break
            theta = theta - step * grad
            loss, grad = loss_and_gradient(theta, Z, y, p.l2)
        else:
            self.final_loss = loss
            raise ConvergenceError(f"no convergence within {p.max_iter} iterations", loss)
        self.theta = theta
        self.n_iter = it
        self.final_loss = loss
        return self

    def decision_function(self, X) -> np.ndarray:
        Z = self._standardize(X)
        return Z @ self.theta[1:] + self.theta[0]

    def predict_proba(self, X) -> np.ndarray:
        return 0.5 * (1.0 + np.tanh(0.5 * self.decision_function(X)))

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "kind": "logistic_regression",
            "params": asdict(self.params),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticRegression":
        model = cls(LogisticParams(**d["params"]))
        model.mean = np.asarray(d["mean"])
        model.scale = np.asarray(d["scale"])
        model.theta = np.asarray(d["theta"])
        return model


def train_logistic_regression(X, y, params: LogisticParams | None = None) -> LogisticRegression:
    return LogisticRegression(params).fit(X, y)
