"""Training loops: surrogate coordinate descent and Newton-type baselines."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .core import beta_hessian, eta_gradient, eta_hessian_diag, lipschitz_constants, loss
from .data import as_sorted

METHODS = ("quad_cd", "cubic_cd", "exact_newton", "quasi_newton", "prox_newton")
SURROGATE_METHODS = ("quad_cd", "cubic_cd")
MONOTONE_SLACK = 1e-10
ETA_REFRESH_SWEEPS = 50


class MonotonicityError(AssertionError):
    """A surrogate coordinate update increased the penalized objective."""


@dataclass(frozen=True)
class FitConfig:
    method: str = "quad_cd"
    lambda1: float = 0.0
    lambda2: float = 0.0
    max_sweeps: int = 1000
    tol: float = 1e-7
    assert_monotone: bool = False
    trace: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be >= 0")
        if self.method == "exact_newton" and self.lambda1 != 0:
            raise ValueError("exact_newton cannot handle an l1 penalty; use lambda1 = 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass
class FitResult:
    beta: np.ndarray
    final_loss: float
    loss_trace: list = field(default_factory=list)
    sweeps_used: int = 0
    converged: bool = False
    diverged: bool = False
    train_loss: float = float("nan")
    flags: list = field(default_factory=list)
    update_objectives: list | None = None
    feature_names: tuple = ()


def check_convergence(beta_change_inf_norm: float, sweep_loss_decrease: float, tol: float) -> bool:
    """Both the largest coefficient change and the relative objective
    decrease of the last sweep must be at most ``tol``."""
    return beta_change_inf_norm <= tol and abs(sweep_loss_decrease) <= tol


def _relative_decrease(prev: float, cur: float) -> float:
    if prev == cur:
        return 0.0
    return (prev - cur) / max(abs(prev), 1e-300)


def fit(dataset, config: FitConfig, beta0=None) -> FitResult:
    """Train a penalized Cox model from ``beta0`` (zeros by default).

    The objective is ``loss(beta) + lambda1 |beta|_1 + lambda2 |beta|_2^2``.
    One trace iteration is one full coordinate sweep for the surrogate
    methods and one Newton step for the baselines.
    """
    ds = as_sorted(dataset)
    beta = np.zeros(ds.p) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (ds.p,):
        raise ValueError(f"beta0 has shape {beta.shape}, expected ({ds.p},)")
    if config.method in SURROGATE_METHODS:
        res = _fit_cd(ds, config, beta)
    else:
        res = _fit_newton(ds, config, beta)
    res.feature_names = ds.feature_names
    return res


def _fit_cd(ds, cfg: FitConfig, beta: np.ndarray) -> FitResult:
    lip = lipschitz_constants(ds)
    cubic = cfg.method == "cubic_cd"
    lam1, lam2 = float(cfg.lambda1), float(cfg.lambda2)
    coords = np.arange(ds.p, dtype=np.int64)
    eta = ds.X @ beta
    buf = np.empty(ds.p)
    args = (lip.L2, lip.L3, ds.x_center, ds.event_group_end, ds.event_group_count,
            ds.event_x_sum, ds.event)

    start = time.perf_counter()
    cur_loss = loss(ds, eta)
    cur_obj = cur_loss + K.penalty(beta, lam1, lam2)
    trace = [(0, cur_loss, cur_obj, 0.0)]
    updates = [] if cfg.assert_monotone else None
    converged = False
    sweep = 0
    for sweep in range(1, cfg.max_sweeps + 1):
        prev_obj = cur_obj
        biggest = K.cd_sweep(ds.Xf, eta, beta, coords, *args, lam1, lam2, cubic,
                             cfg.assert_monotone, buf)
        if cfg.assert_monotone:
            steps = np.concatenate(([prev_obj], buf))
            worst = np.max(np.diff(steps))
            updates.extend(buf.tolist())
            if worst > MONOTONE_SLACK:
                j = int(np.argmax(np.diff(steps)))
                raise MonotonicityError(f"sweep {sweep}, coordinate {j}: objective rose by {worst:.3e}")
        if sweep % ETA_REFRESH_SWEEPS == 0:
            eta = ds.X @ beta
        cur_loss = loss(ds, eta)
        cur_obj = cur_loss + K.penalty(beta, lam1, lam2)
        if cfg.trace:
            trace.append((sweep, cur_loss, cur_obj, time.perf_counter() - start))
        if not math.isfinite(cur_obj):
            return FitResult(beta, cur_obj, trace, sweep, False, True, cur_loss,
                             update_objectives=updates)
        if check_convergence(biggest, _relative_decrease(prev_obj, cur_obj), cfg.tol):
            converged = True
            break
    if not cfg.trace:
        trace.append((sweep, cur_loss, cur_obj, time.perf_counter() - start))
    return FitResult(beta, cur_obj, trace, sweep, converged, False, cur_loss,
                     update_objectives=updates)


def newton_direction(ds, cfg: FitConfig, beta: np.ndarray, eta: np.ndarray, flags: list) -> np.ndarray:
    """Step of one Newton-type iteration (no line search)."""
    lam1, lam2 = float(cfg.lambda1), float(cfg.lambda2)
    g_eta = eta_gradient(ds, eta)
    lin = ds.X.T @ g_eta
    if cfg.method == "exact_newton":
        H = beta_hessian(ds, eta) + 2.0 * lam2 * np.eye(ds.p)
        grad = lin + 2.0 * lam2 * beta
        try:
            if not np.all(np.isfinite(H)):
                return np.full(ds.p, np.nan)
            step = -np.linalg.solve(H, grad)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError("non-finite solve")
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, grad, rcond=None)[0]
            if "singular_hessian" not in flags:
                flags.append("singular_hessian")
        return step
    if cfg.method == "quasi_newton":
        h = eta_hessian_diag(ds, eta)
    else:
        # g + delta = w * c, the diagonal of the upper bound
        h = g_eta + ds.event
    A = (ds.X * h[:, None]).T @ ds.X
    return K.quadratic_model_cd(A, lin, beta, lam1, lam2, 1000, 1e-10)


def _fit_newton(ds, cfg: FitConfig, beta: np.ndarray) -> FitResult:
    lam1, lam2 = float(cfg.lambda1), float(cfg.lambda2)
    flags: list = []
    start = time.perf_counter()
    eta = ds.X @ beta
    cur_loss = loss(ds, eta)
    cur_obj = cur_loss + K.penalty(beta, lam1, lam2)
    trace = [(0, cur_loss, cur_obj, 0.0)]
    converged = diverged = False
    it = 0
    for it in range(1, cfg.max_sweeps + 1):
        prev_obj = cur_obj
        with np.errstate(all="ignore"):
            step = newton_direction(ds, cfg, beta, eta, flags)
        if not np.all(np.isfinite(step)):
            trace.append((it, float("inf"), float("inf"), time.perf_counter() - start))
            cur_loss = cur_obj = float("inf")
            diverged = True
            break
        with np.errstate(over="ignore", invalid="ignore"):
            beta = beta + step
            eta = ds.X @ beta
        if np.all(np.isfinite(eta)):
            cur_loss = loss(ds, eta)
            cur_obj = cur_loss + K.penalty(beta, lam1, lam2)
        else:
            cur_loss = cur_obj = float("inf")
        trace.append((it, cur_loss, cur_obj, time.perf_counter() - start))
        if not math.isfinite(cur_obj):
            diverged = True
            break
        if check_convergence(float(np.max(np.abs(step))), _relative_decrease(prev_obj, cur_obj), cfg.tol):
            converged = True
            break
    return FitResult(beta, cur_obj, trace, it, converged, diverged, cur_loss, flags)


def benchmark(dataset, configs, n_jobs: int = 1) -> list[dict]:
    """Fit every config from the same zero start and collect the traces.

    A failing or diverging run is recorded and never stops the others.
    Results keep the order of ``configs``.
    """
    ds = as_sorted(dataset)

    def run(cfg):
        try:
            res = fit(ds, cfg)
            return {"config": cfg, "result": res, "error": None}
        except Exception as exc:  # recorded per run
            return {"config": cfg, "result": None, "error": f"{type(exc).__name__}: {exc}"}

    if n_jobs <= 1:
        return [run(c) for c in configs]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(run, configs))


def is_monotone(values, slack: float = MONOTONE_SLACK) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) <= slack))


TRACE_COLUMNS = ("method", "lambda1", "lambda2", "sweep", "loss", "objective", "elapsed_s")


def write_trace(path, cfg: FitConfig, result: FitResult) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for it, l, obj, el in result.loss_trace:
            w.writerow([cfg.method, cfg.lambda1, cfg.lambda2, it, repr(float(l)),
                        repr(float(obj)), f"{el:.6f}"])
