"""Four-parameter logistic curves over log2 batch size."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


@dataclass(frozen=True)
class LogisticFit:
    """``f(x) = floor + span / (1 + exp(-slope * (x - midpoint)))`` with ``x = log2(batch)``."""

    floor: float
    span: float
    slope: float
    midpoint: float

    def __post_init__(self) -> None:
        if self.span < 0:
            raise ValueError(f"logistic span must be >= 0, got {self.span}")

    def _sigmoid(self, x):
        z = -self.slope * (np.asarray(x, dtype=float) - self.midpoint)
        # exp overflow saturates to the lower asymptote
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(z))

    def __call__(self, x):
        out = self.floor + self.span * self._sigmoid(x)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x):
        s = self._sigmoid(x)
        out = self.span * self.slope * s * (1.0 - s)
        return float(out) if np.ndim(out) == 0 else out

    def at_batch(self, batch: int) -> float:
        return self(math.log2(batch))

    def to_dict(self) -> dict:
        return {"floor": self.floor, "span": self.span, "slope": self.slope, "midpoint": self.midpoint}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticFit":
        return cls(float(d["floor"]), float(d["span"]), float(d["slope"]), float(d["midpoint"]))


def _logistic(x, floor, span, slope, midpoint):
    return floor + span / (1.0 + np.exp(-slope * (x - midpoint)))


class LogisticCurveRegressor(BaseEstimator, RegressorMixin):
    """Least-squares logistic fit of a measured quantity against batch size.

    Parameters
    ----------
    log2_input : bool
        If True (default) the single input column holds raw batch sizes and is
        transformed with ``log2`` before fitting.
    maxfev : int
        Passed through to :func:`scipy.optimize.curve_fit`.

    Attributes
    ----------
    fit_ : LogisticFit
        The fitted curve.
    """

    def __init__(self, log2_input: bool = True, maxfev: int = 20000):
        self.log2_input = log2_input
        self.maxfev = maxfev

    def _x(self, X):
        x = np.asarray(X, dtype=float)[:, 0]
        if self.log2_input:
            if np.any(x <= 0):
                raise ValueError("batch sizes must be positive")
            x = np.log2(x)
        return x

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=4, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError(f"expected a single input column, got {X.shape[1]}")
        x = self._x(X)
        lo, hi = float(y.min()), float(y.max())
        increasing = np.corrcoef(x, y)[0, 1] >= 0 if np.ptp(y) > 0 else True
        p0 = [lo, hi - lo, 1.0 if increasing else -1.0, float(np.median(x))]
        bounds = ([-np.inf, 0.0, -50.0, -np.inf], [np.inf, np.inf, 50.0, np.inf])
        params, _ = curve_fit(_logistic, x, y, p0=p0, bounds=bounds, maxfev=self.maxfev)
        self.fit_ = LogisticFit(*(float(p) for p in params))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        return np.asarray(self.fit_(self._x(X)))
