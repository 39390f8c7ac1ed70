"""Cox partial-likelihood loss and its exact coordinate derivatives.

Every routine takes a :class:`~fastsurv.data.SortedSurvivalDataset`, so risk
sets are prefixes of the stored order and each pass over the samples costs
O(n).  Exponentials are evaluated as ``exp(eta - max(eta))``; all the
quantities below are invariant to that shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .data import SortedSurvivalDataset, as_sorted


class NumericError(ArithmeticError):
    """Raised when a linear predictor or coefficient becomes non-finite."""


@dataclass(frozen=True)
class LinearPredictor:
    """``eta = X @ beta`` in stored order, with its overflow stabilizer."""

    eta: np.ndarray
    stabilizer: float

    @classmethod
    def from_array(cls, eta) -> "LinearPredictor":
        eta = np.asarray(eta, dtype=float)
        return cls(eta, float(eta.max()))


@dataclass(frozen=True)
class CoordinateDerivatives:
    d1: float
    d2: float | None
    d3: float | None
    feature: int
    eta: LinearPredictor


@dataclass(frozen=True)
class LipschitzTable:
    """Per-feature bounds on |d2| (``L2``) and |d3| (``L3``)."""

    L2: np.ndarray
    L3: np.ndarray


def _eta_array(eta) -> np.ndarray:
    if isinstance(eta, LinearPredictor):
        return eta.eta
    return np.asarray(eta, dtype=float)


def compute_eta(dataset: SortedSurvivalDataset, beta) -> LinearPredictor:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (dataset.p,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({dataset.p},)")
    with np.errstate(over="ignore", invalid="ignore"):
        eta = dataset.X @ beta
    if not np.all(np.isfinite(eta)):
        scale = np.abs(beta) * np.abs(dataset.X).max(axis=0)
        scale[~np.isfinite(beta)] = np.inf
        j = int(np.argmax(scale))
        raise NumericError(f"linear predictor is not finite; coefficient {j} "
                           f"({dataset.feature_names[j]}) = {beta[j]!r}")
    return LinearPredictor(eta, float(eta.max()))


def update_eta(eta: LinearPredictor, dataset: SortedSurvivalDataset, l: int,
               delta_beta: float) -> LinearPredictor:
    """Return ``eta + delta_beta * X[:, l]`` as a new predictor."""
    if not math.isfinite(delta_beta):
        raise NumericError(f"non-finite step {delta_beta!r} for coefficient {l}")
    if delta_beta == 0.0:
        return eta
    new = _eta_array(eta) + delta_beta * dataset.X[:, l]
    if not np.all(np.isfinite(new)):
        raise NumericError(f"linear predictor overflowed updating coefficient {l}")
    return LinearPredictor(new, float(new.max()))


def loss(dataset: SortedSurvivalDataset, eta) -> float:
    """Negative log partial likelihood (Breslow ties)."""
    d = dataset
    return float(K.loss(_eta_array(eta), d.event_group_end, d.event_group_count, d.event))


def objective(dataset, eta, beta, lambda1: float = 0.0, lambda2: float = 0.0) -> float:
    """Loss plus ``lambda1 * |beta|_1 + lambda2 * |beta|_2^2``."""
    beta = np.asarray(beta, dtype=float)
    return loss(dataset, eta) + float(K.penalty(beta, lambda1, lambda2))


def coordinate_partials(dataset: SortedSurvivalDataset, eta, l: int,
                        order: int = 2) -> CoordinateDerivatives:
    """First ``order`` partial derivatives of the loss in coefficient ``l``.

    One pass accumulates the risk-set sums of ``w``, ``w x``, ``w x^2``
    and ``w x^3`` (``w = exp(eta)``).  With ``mu_r`` the weighted mean of
    ``x^r`` over an event's risk set, each event contributes
    ``mu_1 - x_i``, the weighted variance, and the weighted third central
    moment to d1, d2 and d3 respectively.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if not 0 <= l < dataset.p:
        raise IndexError(f"feature index {l} out of range for p={dataset.p}")
    d = dataset
    e = _eta_array(eta)
    d1, d2, d3 = K.partials(d.Xf[:, l], e, 0.0, d.x_center[l], d.event_group_end,
                            d.event_group_count, d.event_x_sum[l], order)
    lp = eta if isinstance(eta, LinearPredictor) else LinearPredictor(e, float(e.max()))
    return CoordinateDerivatives(float(d1), float(d2) if order >= 2 else None,
                                 float(d3) if order >= 3 else None, l, lp)


def risk_set_weights(dataset: SortedSurvivalDataset, eta, i: int) -> np.ndarray:
    """Softmax weights of ``eta`` over the risk set of stored row ``i``."""
    e = _eta_array(eta)[: dataset.group_end[i]]
    w = np.exp(e - e.max())
    return w / w.sum()


def central_moment(dataset: SortedSurvivalDataset, eta, l: int, r: int, i: int) -> float:
    """r-th central moment of feature ``l`` over the risk set of event row
    ``i`` under the softmax weights of ``eta``."""
    if r < 1:
        raise ValueError("r must be >= 1")
    if dataset.event[i] != 1:
        raise ValueError(f"row {i} is not an event")
    if r == 1:
        return 0.0
    w = risk_set_weights(dataset, eta, i)
    x = dataset.X[: dataset.group_end[i], l]
    mean = w @ x
    return float(w @ (x - mean) ** r)


def lipschitz_constants(dataset: SortedSurvivalDataset) -> LipschitzTable:
    """Bounds on the second and third coordinate derivatives.

    For each event the feature's range over its risk set gives a variance
    bound ``range^2 / 4`` and a third-central-moment bound
    ``range^3 / (6 sqrt 3)``.  Risk sets are nested prefixes, so running
    max/min down the stored order gives every range in one pass.
    """
    X = dataset.X
    hi = np.maximum.accumulate(X, axis=0)
    lo = np.minimum.accumulate(X, axis=0)
    ends = dataset.event_group_end - 1
    spread = hi[ends] - lo[ends]
    cnt = dataset.event_group_count[:, None]
    L2 = 0.25 * (cnt * spread ** 2).sum(axis=0)
    L3 = (cnt * spread ** 3).sum(axis=0) / (6.0 * math.sqrt(3.0))
    return LipschitzTable(L2, L3)


def eta_gradient(dataset: SortedSurvivalDataset, eta) -> np.ndarray:
    """Gradient of the loss with respect to eta."""
    d = dataset
    g, _ = K.eta_grad_hess(_eta_array(eta), d.event_group_end, d.event_group_count, d.event, False)
    return g


def eta_hessian_diag(dataset: SortedSurvivalDataset, eta) -> np.ndarray:
    """Diagonal of the eta-space Hessian."""
    d = dataset
    _, h = K.eta_grad_hess(_eta_array(eta), d.event_group_end, d.event_group_count, d.event, True)
    return h


def full_beta_gradient(dataset: SortedSurvivalDataset, eta) -> np.ndarray:
    return dataset.X.T @ eta_gradient(dataset, eta)


def beta_hessian(dataset: SortedSurvivalDataset, eta) -> np.ndarray:
    """Exact p x p Hessian ``X^T (d^2 loss / d eta^2) X`` in O(n p^2).

    Per event the Hessian is the weighted covariance of the risk-set rows,
    so it splits into ``X^T diag(w * c) X`` minus a sum of outer products
    of the risk-set weighted means; neither needs the n x n matrix.
    """
    d = dataset
    e = _eta_array(eta)
    w = np.exp(e - e.max())
    X = d.X
    ends = d.event_group_end - 1
    S0 = np.cumsum(w)[ends]
    S1 = np.cumsum(w[:, None] * X, axis=0)[ends]
    mu = S1 / S0[:, None]
    cnt = d.event_group_count
    # c_k = sum over event groups whose risk set contains k of cnt / S0
    contrib = np.zeros(d.n)
    np.add.at(contrib, ends, cnt / S0)
    c = np.cumsum(contrib[::-1])[::-1]
    first = (X * (w * c)[:, None]).T @ X
    second = (mu * cnt[:, None]).T @ mu
    H = first - second
    return 0.5 * (H + H.T)
