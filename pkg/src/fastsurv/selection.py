"""Cardinality-constrained Cox regression by beam search.

Supports grow one feature at a time.  Every state in the frontier scores
each outside feature by the loss decrease it achieves when optimized alone
on top of the state's linear predictor, spawns children from its best
candidates, and each child is refit on its support by unpenalized
coordinate descent.  The best ``beam_width`` children form the next
frontier.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import lipschitz_constants, loss
from .data import as_sorted
from .optimizers import FitConfig, SURROGATE_METHODS, check_convergence, _relative_decrease

SCORE_STARTS = ("zero", "surrogate")


@dataclass(frozen=True)
class BeamState:
    """A support (in insertion order), its fitted coefficients and loss."""

    support: tuple
    beta: np.ndarray
    loss: float
    eta: np.ndarray = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def key(self) -> frozenset:
        return frozenset(self.support)


@dataclass(frozen=True)
class SelectionConfig:
    """Beam-search settings.

    ``inner`` picks the surrogate (quad_cd or cubic_cd) used both to score
    candidates and to fine-tune children, and the fine-tuning tolerance.
    ``score_start`` is where each candidate's trial coefficient starts:
    ``"zero"`` or ``"surrogate"`` (the first quadratic-surrogate step).
    """

    k_max: int
    beam_width: int = 10
    candidates_per_beam: int = 10
    inner: FitConfig = field(default_factory=lambda: FitConfig(method="cubic_cd", tol=1e-9,
                                                               max_sweeps=1000, trace=False))
    score_tol: float = 1e-8
    score_max_iter: int = 100
    score_start: str = "zero"

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.beam_width < 1 or self.candidates_per_beam < 1:
            raise ValueError("beam_width and candidates_per_beam must be >= 1")
        if self.inner.method not in SURROGATE_METHODS:
            raise ValueError(f"inner method must be one of {SURROGATE_METHODS}")
        if self.score_start not in SCORE_STARTS:
            raise ValueError(f"score_start must be one of {SCORE_STARTS}")
        if self.score_tol <= 0 or self.score_max_iter < 1:
            raise ValueError("score_tol must be > 0 and score_max_iter >= 1")


class _Context:
    """Sorted data plus its Lipschitz table, shared by all beam steps."""

    def __init__(self, dataset):
        self.ds = as_sorted(dataset)
        self.lip = lipschitz_constants(self.ds)

    def kernel_args(self):
        d, lip = self.ds, self.lip
        return (lip.L2, lip.L3, d.x_center, d.event_group_end, d.event_group_count,
                d.event_x_sum, d.event)


def empty_state(dataset) -> BeamState:
    ds = as_sorted(dataset)
    eta = np.zeros(ds.n)
    return BeamState((), np.zeros(ds.p), loss(ds, eta), eta)


def _rank(ctx: _Context, state: BeamState, config: SelectionConfig):
    ds = ctx.ds
    inside = np.zeros(ds.p, dtype=bool)
    inside[list(state.support)] = True
    cand = np.flatnonzero(~inside).astype(np.int64)
    if cand.size == 0:
        return []
    coef, losses = K.rank_all(ds.Xf, state.eta, cand, *ctx.kernel_args(),
                              config.inner.method == "cubic_cd", config.score_tol,
                              config.score_max_iter, config.score_start == "surrogate")
    dec = state.loss - losses
    # descending decrease, ties by feature index
    order = np.lexsort((cand, -dec))
    return [(int(cand[i]), float(coef[i]), float(dec[i])) for i in order]


def rank_candidates(dataset, state: BeamState, config: SelectionConfig | None = None):
    """Score every feature outside ``state.support``.

    Each candidate coefficient is optimized alone, all others frozen, by
    iterated surrogate steps.  Returns ``(feature, coefficient, decrease)``
    tuples sorted by decrease (largest first), ties by feature index.
    """
    config = config or SelectionConfig(k_max=1)
    return _rank(_Context(dataset), state, config)


def _finetune(ctx: _Context, support, beta: np.ndarray, eta: np.ndarray, cfg: FitConfig):
    ds = ctx.ds
    coords = np.asarray(support, dtype=np.int64)
    buf = np.empty(0)
    cubic = cfg.method == "cubic_cd"
    cur = loss(ds, eta)
    for _ in range(cfg.max_sweeps):
        prev = cur
        biggest = K.cd_sweep(ds.Xf, eta, beta, coords, *ctx.kernel_args(), 0.0, 0.0, cubic,
                             False, buf)
        cur = loss(ds, eta)
        if check_convergence(biggest, _relative_decrease(prev, cur), cfg.tol):
            break
    # drop accumulated drift before the state is stored
    eta = ds.X @ beta
    return beta, eta, loss(ds, eta)


def _expand(ctx: _Context, frontier, config: SelectionConfig):
    sizes = {s.size for s in frontier}
    if len(sizes) != 1:
        raise ValueError("all frontier states must share one support size")
    ds = ctx.ds
    pending = {}
    for state in frontier:
        for l, coef, _ in _rank(ctx, state, config)[: config.candidates_per_beam]:
            support = state.support + (l,)
            key = frozenset(support)
            eta = state.eta + coef * ds.Xf[:, l]
            start_loss = loss(ds, eta)
            # the same support from two parents: keep the better start
            if key in pending and pending[key][0] <= start_loss:
                continue
            beta = state.beta.copy()
            beta[l] = coef
            pending[key] = (start_loss, support, beta, eta)
    children = []
    for _, support, beta, eta in pending.values():
        beta, eta, value = _finetune(ctx, support, beta, eta, config.inner)
        children.append(BeamState(support, beta, value, eta))
    children.sort(key=lambda s: (s.loss, tuple(sorted(s.support))))
    return children[: config.beam_width]


def expand_and_finetune(dataset, frontier, config: SelectionConfig):
    """Grow every state in ``frontier`` by one feature and keep the best
    ``beam_width`` distinct children (fewer if not enough exist)."""
    return _expand(_Context(dataset), list(frontier), config)


def beam_search(dataset, config: SelectionConfig):
    """Best state found at each support size 1..k_max."""
    ctx = _Context(dataset)
    ds = ctx.ds
    if config.k_max > ds.p:
        raise ValueError(f"k_max={config.k_max} exceeds the number of features ({ds.p})")
    usable = int(np.count_nonzero(ctx.lip.L2 > 0))
    k_max = config.k_max
    if k_max > usable:
        warnings.warn(f"only {usable} features vary over the risk sets; "
                      f"path truncated at size {usable}", RuntimeWarning, stacklevel=2)
        k_max = usable
    frontier = [empty_state(ds)]
    path = []
    for _ in range(k_max):
        frontier = _expand(ctx, frontier, config)
        if not frontier:
            break
        path.append(frontier[0])
    return path


def path_records(path, feature_names) -> list[dict]:
    """JSON-ready sparsity path: one record per support size."""
    out = []
    for state in path:
        idx = sorted(state.support)
        out.append({
            "support_size": state.size,
            "feature_names": [feature_names[j] for j in idx],
            "coefficients": [float(state.beta[j]) for j in idx],
            "train_loss": float(state.loss) if math.isfinite(state.loss) else None,
        })
    return out
