"""Evaluation metrics: Cox loss, Harrell's C-index, integrated Brier score
and support recovery scores."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import compute_eta, loss
from .data import as_sorted


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


@dataclass(frozen=True)
class SurvivalFunctionEstimate:
    """Survival probabilities ``S[i, k] = S_i(time_grid[k])``."""

    time_grid: np.ndarray
    S: np.ndarray


@dataclass(frozen=True)
class RecoveryScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function, 0 before the first jump."""

    x: np.ndarray
    y: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.x, t, side="right") - 1
        out = np.where(k >= 0, self.y[np.maximum(k, 0)], 0.0)
        return out if out.ndim else float(out)


def cph_loss(dataset, beta) -> float:
    """Unpenalized negative log partial likelihood at ``beta``."""
    ds = as_sorted(dataset)
    return loss(ds, compute_eta(ds, beta))


def concordance_index(times, events, risk_scores, chunk: int = 2048) -> float:
    """Harrell's C: among pairs with ``t_i < t_j`` and ``delta_i = 1``, the
    share where ``risk_i > risk_j``; tied risks count one half."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(events).astype(bool)
    r = np.asarray(risk_scores, dtype=float)
    if not (t.shape == d.shape == r.shape) or t.ndim != 1:
        raise ValueError("times, events and risk_scores must be 1-d and of equal length")
    ev = np.flatnonzero(d)
    num = 0.0
    den = 0
    for s in range(0, ev.size, chunk):
        i = ev[s: s + chunk]
        later = t[None, :] > t[i, None]
        hi = r[i, None] > r[None, :]
        tie = r[i, None] == r[None, :]
        den += int(later.sum())
        num += (later & hi).sum() + 0.5 * (later & tie).sum()
    if den == 0:
        raise MetricError("no comparable pairs; the C-index is undefined")
    return float(num / den)


def breslow_baseline(dataset, beta) -> StepFunction:
    """Breslow estimate of the cumulative baseline hazard.

    Each distinct event time adds ``(events at t) / sum_{t_j >= t} exp(eta_j)``.
    """
    ds = as_sorted(dataset)
    eta = compute_eta(ds, beta).eta
    w = np.exp(eta)
    S0 = np.cumsum(w)
    ends = ds.event_group_end
    jumps = ds.event_group_count / S0[ends - 1]
    times = ds.time[ends - 1]
    # stored order is by decreasing time
    times, jumps = times[::-1], jumps[::-1]
    return StepFunction(times.copy(), np.cumsum(jumps))


def predict_survival(baseline: StepFunction, eta, time_grid) -> SurvivalFunctionEstimate:
    grid = np.asarray(time_grid, dtype=float)
    H = baseline(grid)
    S = np.exp(-np.outer(np.exp(np.asarray(eta, dtype=float)), np.atleast_1d(H)))
    return SurvivalFunctionEstimate(grid, np.clip(S, 0.0, 1.0))


def censoring_km(times, events) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survival function G."""
    t = np.asarray(times, dtype=float)
    cens = np.asarray(events) == 0
    u = np.unique(t)
    at_risk = t.size - np.searchsorted(np.sort(t), u, side="left")
    c = np.bincount(np.searchsorted(u, t[cens]), minlength=u.size)
    G = np.cumprod(1.0 - c / at_risk)
    return StepFunction(u, G)


def _left_limit(f: StepFunction, t):
    k = np.searchsorted(f.x, t, side="left") - 1
    return np.where(k >= 0, f.y[np.maximum(k, 0)], 1.0)


def default_time_grid(test_times, points: int = 100) -> np.ndarray:
    lo, hi = np.quantile(np.asarray(test_times, dtype=float), [0.01, 0.99], method="inverted_cdf")
    return np.linspace(lo, hi, points)


def brier_scores(train, test, beta, time_grid):
    """Censoring-weighted Brier score at each grid time and the grid used.

    Grid points where the censoring survival estimate has reached zero are
    dropped with a warning.
    """
    grid = np.asarray(time_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("time_grid must be a nonempty increasing 1-d array")
    G = censoring_km(train.time, train.event)
    G_grid = np.atleast_1d(G(grid))
    keep = G_grid > 0
    if not np.all(keep):
        warnings.warn(f"censoring survival reaches 0 at t={grid[~keep][0]!r}; "
                      f"grid truncated to {int(keep.sum())} points", RuntimeWarning, stacklevel=3)
        grid, G_grid = grid[keep], G_grid[keep]
        if grid.size == 0:
            raise MetricError("censoring survival is 0 on the whole grid")
    H0 = breslow_baseline(train, beta)
    eta_test = test.X @ np.asarray(beta, dtype=float)
    surv = predict_survival(H0, eta_test, grid)
    return brier_from_survival(surv, test.time, test.event, G), grid


def brier_from_survival(surv: SurvivalFunctionEstimate, times, events, G: StepFunction):
    """Graf's censoring-weighted Brier score on ``surv.time_grid``.

    A sample that failed by ``t`` contributes ``S(t)^2 / G(t_i-)``; one
    still at risk after ``t`` contributes ``(1 - S(t))^2 / G(t)``; samples
    censored by ``t`` contribute 0.  The result is the mean over samples.
    """
    grid = np.asarray(surv.time_grid, dtype=float)
    S = surv.S
    times = np.asarray(times, dtype=float)
    t = times[:, None]
    died = (np.asarray(events) == 1)[:, None] & (t <= grid[None, :])
    alive = t > grid[None, :]
    G_grid = np.atleast_1d(G(grid))
    G_minus = _left_limit(G, times)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        term_dead = np.where(died, S ** 2 / G_minus, 0.0)
        term_alive = np.where(alive, (1.0 - S) ** 2 / G_grid[None, :], 0.0)
    return (term_dead + term_alive).mean(axis=0)


def integrated_brier_score(train, test, beta, time_grid=None) -> float:
    """Brier score integrated over ``time_grid`` by the trapezoid rule and
    divided by the grid span.

    Survival curves come from a Breslow baseline fitted on ``train``; the
    inverse-probability-of-censoring weights come from a Kaplan-Meier fit
    of the censoring times in ``train``.  The default grid is 100 equally
    spaced points between the 1st and 99th percentiles of the test times.
    """
    if time_grid is None:
        time_grid = default_time_grid(test.time)
    bs, grid = brier_scores(train, test, beta, np.unique(np.asarray(time_grid, dtype=float)))
    if grid.size == 1:
        return float(bs[0])
    return float(np.trapezoid(bs, grid) / (grid[-1] - grid[0]))


def support_recovery(beta_hat, beta_star) -> RecoveryScores:
    """Precision, recall and F1 of the nonzero pattern of ``beta_hat``
    against that of ``beta_star``."""
    bh = np.asarray(beta_hat)
    bs = np.asarray(beta_star)
    if bh.shape != bs.shape:
        raise ValueError("beta_hat and beta_star must have equal lengths")
    est = bh != 0
    true = bs != 0
    hit = int(np.count_nonzero(est & true))
    P = hit / est.sum() if est.any() else 0.0
    R = hit / true.sum() if true.any() else 0.0
    F = 2 * P * R / (P + R) if P + R > 0 else 0.0
    return RecoveryScores(float(P), float(R), float(F))
