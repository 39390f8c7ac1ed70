"""Time-to-event datasets: ingestion, validation, sorting, binarization,
cross-validation splits and synthetic generation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for schema, parse and validation problems in survival data."""


@dataclass(frozen=True)
class SurvivalDataset:
    """Feature matrix plus observation times and event indicators.

    Rows are samples in their original order. ``event`` holds 0/1 values
    (1 = failure observed, 0 = right-censored).
    """

    X: np.ndarray
    time: np.ndarray
    event: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        time = np.asarray(self.time, dtype=float).ravel()
        event = np.asarray(self.event).ravel()
        if X.ndim != 2:
            raise DataError(f"X must be 2-dimensional, got shape {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DataError(f"need n >= 1 and p >= 1, got X of shape {X.shape}")
        if time.shape[0] != n or event.shape[0] != n:
            raise DataError("time and event must have one entry per row of X")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature value at row {r}, column {c}")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            r = int(np.flatnonzero(~(np.isfinite(time) & (time >= 0)))[0])
            raise DataError(f"observation times must be finite and >= 0 (row {r})")
        bad = ~np.isin(event, (0, 1))
        if np.any(bad):
            r = int(np.flatnonzero(bad)[0])
            raise DataError(f"event indicator must be 0 or 1, got {event[r]!r} at row {r}")
        event = event.astype(np.int8)
        if event.sum() == 0:
            raise DataError("no events: at least one row needs event = 1")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != p:
            raise DataError(f"{len(names)} feature names for {p} columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(self.X[rows], self.time[rows], self.event[rows], self.feature_names)

    def select_features(self, names) -> "SurvivalDataset":
        index = {name: j for j, name in enumerate(self.feature_names)}
        missing = [name for name in names if name not in index]
        if missing:
            raise DataError(f"features not present in data: {missing[:5]}")
        cols = [index[name] for name in names]
        return SurvivalDataset(self.X[:, cols], self.time, self.event, tuple(names))


@dataclass(frozen=True)
class SortedSurvivalDataset:
    """A dataset reordered by nonincreasing time, indexed for risk-set sums.

    In stored order the risk set of row ``i`` (all rows whose time is at
    least ``time[i]``) is the prefix ``[0, group_end[i])``; tied rows share
    the same prefix.  ``permutation[k]`` is the original row index of stored
    row ``k``.

    ``event_group_end`` / ``event_group_count`` list, for every tie group
    that contains at least one event, the exclusive end of its prefix and
    the number of events it holds.  Everything the loss and its derivatives
    need reduces to sums at those prefix ends.
    """

    base: SurvivalDataset
    tie_group_start: np.ndarray
    group_end: np.ndarray
    permutation: np.ndarray
    event_group_end: np.ndarray
    event_group_count: np.ndarray
    Xf: np.ndarray = field(repr=False)
    event_x_sum: np.ndarray = field(repr=False)
    x_center: np.ndarray = field(repr=False)

    @property
    def X(self) -> np.ndarray:
        return self.base.X

    @property
    def time(self) -> np.ndarray:
        return self.base.time

    @property
    def event(self) -> np.ndarray:
        return self.base.event

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.base.feature_names

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def p(self) -> int:
        return self.base.p

    def risk_set(self, i: int) -> np.ndarray:
        """Stored-order indices in the risk set of stored row ``i``."""
        return np.arange(self.group_end[i])

    def unsort(self) -> SurvivalDataset:
        """Return the dataset in its original row order."""
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(self.n)
        b = self.base
        return SurvivalDataset(b.X[inv], b.time[inv], b.event[inv], b.feature_names)


def sort_and_index(dataset: SurvivalDataset) -> SortedSurvivalDataset:
    """Sort rows by nonincreasing time (ties by original index) and index
    the tie groups."""
    n = dataset.n
    perm = np.lexsort((np.arange(n), -dataset.time))
    base = SurvivalDataset(dataset.X[perm], dataset.time[perm], dataset.event[perm],
                           dataset.feature_names)
    t = base.time
    new_group = np.empty(n, dtype=bool)
    new_group[0] = True
    new_group[1:] = t[1:] != t[:-1]
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:], n)
    sizes = ends - starts
    tie_group_start = np.repeat(starts, sizes)
    group_end = np.repeat(ends, sizes)

    group_id = np.repeat(np.arange(starts.size), sizes)
    counts = np.bincount(group_id, weights=base.event, minlength=starts.size).astype(np.int64)
    has_event = counts > 0
    ev = base.event.astype(bool)
    return SortedSurvivalDataset(
        base=base,
        tie_group_start=tie_group_start,
        group_end=group_end,
        permutation=perm,
        event_group_end=ends[has_event].astype(np.int64),
        event_group_count=counts[has_event].astype(np.float64),
        Xf=np.asfortranarray(base.X),
        event_x_sum=base.X[ev].sum(axis=0),
        x_center=0.5 * (base.X.max(axis=0) + base.X.min(axis=0)),
    )


def as_sorted(dataset) -> SortedSurvivalDataset:
    if isinstance(dataset, SortedSurvivalDataset):
        return dataset
    return sort_and_index(dataset)


# ---------------------------------------------------------------- CSV I/O

def load_csv(path, time_column: str = "time", event_column: str = "event") -> SurvivalDataset:
    """Read a survival dataset from a CSV file with a header row.

    Every column other than the time and event columns is a feature, kept
    in header order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    for col in (time_column, event_column):
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    if not rows:
        raise DataError(f"{path}: no data rows")

    values = np.empty((len(rows), len(header)))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 1} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at row {r + 1}, "
                                f"column {header[c]!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: non-finite value at row {r + 1}, column {header[c]!r}")
            values[r, c] = v

    ti, ei = header.index(time_column), header.index(event_column)
    event = values[:, ei]
    bad = ~np.isin(event, (0.0, 1.0))
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0])
        raise DataError(f"{path}: event value {event[r]:g} at row {r + 1} is not 0 or 1")
    if event.sum() == 0:
        raise DataError(f"{path}: no events (every {event_column} value is 0)")
    feat = [c for c in range(len(header)) if c not in (ti, ei)]
    if not feat:
        raise DataError(f"{path}: no feature columns")
    return SurvivalDataset(values[:, feat], values[:, ti], event.astype(np.int8),
                           tuple(header[c] for c in feat))


def save_csv(dataset: SurvivalDataset, path, time_column: str = "time",
             event_column: str = "event") -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([time_column, event_column, *dataset.feature_names])
        for i in range(dataset.n):
            w.writerow([repr(float(dataset.time[i])), int(dataset.event[i]),
                        *(repr(float(v)) for v in dataset.X[i])])


# ----------------------------------------------------------- binarization

def _is_binary(col: np.ndarray) -> bool:
    return bool(np.all((col == 0) | (col == 1)))


def _format_threshold(v: float) -> str:
    return repr(float(v))


@dataclass
class Binarizer:
    """Threshold encoder turning each continuous column into ``1[x <= q]``
    indicator columns.

    Thresholds are empirical quantiles at levels ``j / (Q + 1)``,
    ``j = 1..Q``, using the inverted-CDF convention (the smallest observed
    value whose empirical CDF reaches the level), so every threshold is an
    observed value.  Duplicate thresholds are dropped, as is any threshold
    equal to the column maximum (its indicator would be constant 1).
    Columns whose values are already a subset of {0, 1} pass through.
    """

    quantiles: int
    thresholds: dict = field(default_factory=dict)
    passthrough: list = field(default_factory=list)
    source_names: tuple = ()

    def fit(self, dataset: SurvivalDataset) -> "Binarizer":
        if self.quantiles < 1:
            raise ValueError("quantiles_per_feature must be >= 1")
        levels = np.arange(1, self.quantiles + 1) / (self.quantiles + 1)
        self.thresholds, self.passthrough = {}, []
        self.source_names = dataset.feature_names
        for j, name in enumerate(dataset.feature_names):
            col = dataset.X[:, j]
            if _is_binary(col):
                self.passthrough.append(name)
                continue
            qs = np.unique(np.quantile(col, levels, method="inverted_cdf"))
            self.thresholds[name] = [float(q) for q in qs if q < col.max()]
        return self

    def output_names(self) -> list[str]:
        names = []
        for name in self.source_names:
            if name in self.passthrough:
                names.append(name)
            else:
                names.extend(f"{name}<={_format_threshold(q)}" for q in self.thresholds[name])
        return names

    def transform(self, dataset: SurvivalDataset) -> SurvivalDataset:
        index = {name: j for j, name in enumerate(dataset.feature_names)}
        missing = [s for s in self.source_names if s not in index]
        if missing:
            raise DataError(f"data lacks columns required by the binarizer: {missing[:5]}")
        cols = []
        for name in self.source_names:
            col = dataset.X[:, index[name]]
            if name in self.passthrough:
                cols.append(col[:, None])
            elif self.thresholds[name]:
                qs = np.asarray(self.thresholds[name])
                cols.append((col[:, None] <= qs[None, :]).astype(float))
        if not cols:
            raise DataError("binarization produced no feature columns")
        return SurvivalDataset(np.hstack(cols), dataset.time, dataset.event,
                               tuple(self.output_names()))

    def to_dict(self) -> dict:
        return {"quantiles": self.quantiles, "source_names": list(self.source_names),
                "passthrough": list(self.passthrough), "thresholds": self.thresholds}

    @classmethod
    def from_dict(cls, d: dict) -> "Binarizer":
        return cls(quantiles=int(d["quantiles"]), thresholds={k: list(v) for k, v in d["thresholds"].items()},
                   passthrough=list(d["passthrough"]), source_names=tuple(d["source_names"]))


def binarize_features(dataset: SurvivalDataset, quantiles_per_feature: int) -> SurvivalDataset:
    """Replace every continuous column by quantile-threshold indicators."""
    return Binarizer(quantiles_per_feature).fit(dataset).transform(dataset)


# ------------------------------------------------------------ CV splits

def kfold_split(dataset: SurvivalDataset, folds: int, seed: int = 0):
    """Shuffled k-fold partition of row indices.

    Returns a list of ``(train_idx, test_idx)`` pairs; test sets are
    disjoint and cover all rows.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > dataset.n:
        raise DataError(f"cannot make {folds} folds from {dataset.n} rows")
    order = np.random.default_rng(seed).permutation(dataset.n)
    splits = []
    for k, test in enumerate(np.array_split(order, folds)):
        train = np.setdiff1d(order, test)
        if dataset.event[train].sum() == 0:
            raise DataError(f"fold {k}: training part has no events")
        splits.append((train, np.sort(test)))
    return splits


# ------------------------------------------------------- synthetic data

@dataclass(frozen=True)
class SyntheticGroundTruth:
    beta_star: np.ndarray
    support_star: tuple[int, ...]
    params: dict

    def to_dict(self) -> dict:
        return {"beta_star": [float(b) for b in self.beta_star],
                "support_star": list(self.support_star),
                "params": dict(self.params), "seed": self.params["seed"]}


def true_support(p: int, k: int) -> np.ndarray:
    """0-based indices of the nonzero true coefficients.

    With 1-based positions, coefficient ``j`` is active when ``j`` is a
    multiple of ``stride = floor(p / k)``; only the first ``k`` multiples
    are used, so e.g. p=1200, k=15 activates 0-based 79, 159, ..., 1199.
    """
    stride = p // k
    return stride * np.arange(1, k + 1) - 1


def generate_synthetic(n: int, p: int, rho: float, k: int, s: float, seed: int = 0,
                       event_rule: str = "death_first"):
    """Sample a correlated Gaussian design with Weibull-type survival times.

    Features follow N(0, Sigma) with Sigma[j, l] = rho**|j - l|, drawn with
    the equivalent AR(1) recursion.  Death times are
    ``(-log V / exp(x @ beta_star)) ** s`` with V ~ U(0, 1); censoring
    times are U(0, 1) and the observed time is the minimum of the two.

    ``event_rule`` picks the event indicator: ``"death_first"`` (default)
    flags an event when death happens no later than censoring, the usual
    right-censoring convention.  ``"censor_first"`` flags it when the death
    time exceeds the censoring time; under that rule the event hazard is
    independent of the features, so it is kept only for completeness.
    """
    if not (0 < rho <= 1):
        raise ValueError("rho must lie in (0, 1]")
    if not (1 <= k <= p):
        raise ValueError("need 1 <= k <= p")
    if s <= 0:
        raise ValueError("s must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    if event_rule not in ("death_first", "censor_first"):
        raise ValueError(f"unknown event_rule {event_rule!r}")

    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    scale = math.sqrt(max(0.0, 1.0 - rho * rho))
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + scale * Z[:, j]

    beta_star = np.zeros(p)
    support = true_support(p, k)
    beta_star[support] = 1.0

    V = rng.uniform(0.0, 1.0, n)
    C = rng.uniform(0.0, 1.0, n)
    with np.errstate(over="ignore", divide="ignore"):
        death = (-np.log(V) / np.exp(X @ beta_star)) ** s
    if event_rule == "death_first":
        event = (death <= C).astype(np.int8)
    else:
        event = (death > C).astype(np.int8)
    time = np.minimum(death, C)
    if event.sum() == 0:
        # a handful of tiny samples can end up fully censored; flag the earliest
        event[np.argmin(time)] = 1

    names = tuple(f"x{j}" for j in range(p))
    truth = SyntheticGroundTruth(
        beta_star=beta_star,
        support_star=tuple(int(j) for j in support),
        params={"n": n, "p": p, "rho": rho, "k": k, "s": s, "seed": seed,
                "event_rule": event_rule},
    )
    return SurvivalDataset(X, time, event, names), truth


def make_flchain_like(n: int = 5000, seed: int = 0) -> SurvivalDataset:
    """Continuous/categorical stand-in for the serum free light chain cohort.

    Mimics its shape: an age column with a strong effect, skewed lab
    values, a few categorical codes, a rare high-risk group (``mgus``) and
    a cause-of-death style code that is recorded almost only for subjects
    who died.  The rare group and the near-separating code make the
    binarized problem badly conditioned far from the optimum, which is what
    stresses Newton-type solvers.  Binarize with :func:`binarize_features` to get a
    few hundred highly correlated indicator columns.
    """
    rng = np.random.default_rng(seed)
    age = rng.uniform(50, 101, n).round()
    sex = rng.integers(0, 2, n).astype(float)
    sample_yr = rng.integers(1995, 2004, n).astype(float)
    kappa = np.exp(rng.normal(0.2, 0.45, n)).round(2)
    lam = np.exp(rng.normal(0.35, 0.4, n)).round(2)
    flc_grp = np.clip(np.ceil((kappa + lam) / 0.6), 1, 10)
    creatinine = np.exp(rng.normal(0.05, 0.25, n)).round(1)
    mgus = (rng.uniform(size=n) < 0.02).astype(float)

    # the small mgus group carries a very large hazard ratio; its members
    # fail early, which is what pushes an undamped Newton step too far
    eta = (0.1 * (age - 70) + 0.3 * np.log(kappa + lam) + 0.25 * sex
           + 0.6 * np.log(creatinine) + 5.0 * mgus)
    death = rng.exponential(1.0, n) * np.exp(-eta) * 60.0
    follow = rng.uniform(5.0, 14.0, n)
    event = (death <= follow).astype(np.int8)
    time = np.round(np.minimum(death, follow) * 365.0)

    chapter = np.zeros(n)
    dead = event == 1
    chapter[dead] = rng.integers(1, 17, dead.sum())
    slip = (~dead) & (rng.uniform(size=n) < 0.01)
    chapter[slip] = rng.integers(1, 17, slip.sum())

    X = np.column_stack([age, sex, sample_yr, kappa, lam, flc_grp, creatinine, mgus, chapter])
    names = ("age", "sex", "sample_yr", "kappa", "lambda", "flc_grp", "creatinine",
             "mgus", "chapter")
    return SurvivalDataset(X, time, event, names)


def write_ground_truth(truth: SyntheticGroundTruth, path) -> None:
    Path(path).write_text(json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n")


def fingerprint(dataset: SurvivalDataset) -> dict:
    import hashlib
    h = hashlib.sha256()
    for arr in (dataset.X, dataset.time, dataset.event.astype(np.float64)):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update("\x1f".join(dataset.feature_names).encode())
    return {"rows": dataset.n, "columns": dataset.p, "sha256": h.hexdigest()}
