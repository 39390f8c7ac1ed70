"""Command-line interface: generate, train, benchmark, select, evaluate.

Exit codes: 0 success, 1 usage error, 2 data or schema error, 3 numeric
divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core import NumericError
from .data import (Binarizer, DataError, fingerprint, generate_synthetic, kfold_split, load_csv,
                   save_csv, write_ground_truth)
from .metrics import (MetricError, cph_loss, concordance_index, integrated_brier_score,
                      support_recovery)
from .optimizers import METHODS, FitConfig, benchmark, fit, is_monotone, write_trace
from .selection import SCORE_STARTS, SelectionConfig, beam_search, path_records

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _data_flags(sp):
    sp.add_argument("--data", required=True, help="input CSV")
    sp.add_argument("--time-column", default="time")
    sp.add_argument("--event-column", default="event")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fastsurv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fastsurv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset and its ground truth")
    g.add_argument("--n", type=int, default=1200)
    g.add_argument("--p", type=int, default=1200)
    g.add_argument("--rho", type=float, default=0.9)
    g.add_argument("--k", type=int, default=15)
    g.add_argument("--s", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--event-rule", choices=("death_first", "censor_first"), default="death_first")
    g.add_argument("--out", required=True, help="dataset CSV path")
    g.add_argument("--truth-out", help="ground-truth JSON (default: <out stem>.truth.json)")

    t = sub.add_parser("train", help="fit one penalized Cox model")
    _data_flags(t)
    t.add_argument("--method", choices=METHODS, default="quad_cd")
    t.add_argument("--lambda1", type=float, default=0.0)
    t.add_argument("--lambda2", type=float, default=0.0)
    t.add_argument("--tol", type=float, default=1e-7)
    t.add_argument("--max-sweeps", type=int, default=1000)
    t.add_argument("--binarize-quantiles", type=int, default=0,
                   help="threshold-encode continuous columns with this many quantiles (0 = off)")
    t.add_argument("--out", required=True, help="model JSON path")
    t.add_argument("--trace-out", help="trace CSV (default: <out stem>.trace.csv)")

    b = sub.add_parser("benchmark", help="trace every (method, lambda1, lambda2) combination")
    _data_flags(b)
    b.add_argument("--methods", type=_csv_list(str), default=list(METHODS))
    b.add_argument("--lambda1-grid", type=_csv_list(float), default=[0.0, 1.0])
    b.add_argument("--lambda2-grid", type=_csv_list(float), default=[1.0, 5.0])
    b.add_argument("--tol", type=float, default=1e-7)
    b.add_argument("--max-sweeps", type=int, default=100)
    b.add_argument("--binarize-quantiles", type=int, default=0)
    b.add_argument("--out-dir", required=True)

    s = sub.add_parser("select", help="beam-search sparsity path with cross-validated metrics")
    _data_flags(s)
    s.add_argument("--k-max", type=int, default=15)
    s.add_argument("--beam-width", type=int, default=10)
    s.add_argument("--candidates", type=int, default=10)
    s.add_argument("--inner-method", choices=("quad_cd", "cubic_cd"), default="cubic_cd")
    s.add_argument("--score-start", choices=SCORE_STARTS, default="zero")
    s.add_argument("--folds", type=int, default=5, help="1 = fit and score on all rows")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--binarize-quantiles", type=int, default=0)
    s.add_argument("--truth", help="ground-truth JSON for precision/recall/F1")
    s.add_argument("--out", required=True, help="path JSON")
    s.add_argument("--metrics-out", help="metrics JSON (default: <out stem>.metrics.json)")

    e = sub.add_parser("evaluate", help="score a saved model on a dataset")
    _data_flags(e)
    e.add_argument("--model", required=True)
    e.add_argument("--out", required=True)

    for sp in (g, t, b, s, e):
        sp.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv) -> argparse.Namespace:
    subs = ap._subparsers._group_actions[0].choices
    # first pass only locates --config, so required flags may still be missing
    relaxed = [a for sp in subs.values() for a in sp._actions if a.required]
    for a in relaxed:
        a.required = False
    try:
        pre, _ = ap.parse_known_args(argv)
    finally:
        for a in relaxed:
            a.required = True
    if not getattr(pre, "config", None):
        return ap.parse_args(argv)
    try:
        cfg = json.loads(Path(pre.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        ap.error(f"cannot read config {pre.config}: {exc}")
    if not isinstance(cfg, dict):
        ap.error("config file must hold a JSON object")
    sp = subs[pre.command]
    known = {a.dest for a in sp._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known - {"command"})
    if unknown:
        ap.error(f"unknown config keys for {pre.command}: {', '.join(unknown)}")
    for act in sp._actions:
        if act.dest in cfg:
            act.required = False
            v = cfg[act.dest]
            if act.type is not None and isinstance(v, str):
                v = act.type(v)
            if act.choices is not None and v not in act.choices:
                ap.error(f"config value {v!r} for {act.dest} not in {sorted(act.choices)}")
            sp.set_defaults(**{act.dest: v})
    return ap.parse_args(argv)


def _manifest(args, dataset=None, wall=None) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items())}
    out = {"command": args.command, "config": cfg, "version": __version__}
    if dataset is not None:
        out["dataset"] = fingerprint(dataset)
    if wall is not None:
        out["timings"] = {"wall_s": round(wall, 6)}
    return out


def _dump(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _finite(v):
    return float(v) if v is not None and math.isfinite(v) else None


def _load(args):
    return load_csv(args.data, args.time_column, args.event_column)


def _preprocess(ds, quantiles):
    if quantiles < 0:
        raise UsageError("--binarize-quantiles must be >= 0")
    if quantiles == 0:
        return ds, None
    enc = Binarizer(quantiles).fit(ds)
    return enc.transform(ds), enc


def _sibling(path, suffix):
    p = Path(path)
    return p.with_name(p.stem + suffix)


# ------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    t0 = time.perf_counter()
    try:
        ds, truth = generate_synthetic(args.n, args.p, args.rho, args.k, args.s, seed=args.seed,
                                       event_rule=args.event_rule)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, args.out)
    write_ground_truth(truth, args.truth_out or _sibling(args.out, ".truth.json"))
    _dump(_sibling(args.out, ".manifest.json"), _manifest(args, ds, time.perf_counter() - t0))
    return EXIT_OK


def _model_dict(args, cfg, res, enc, manifest):
    return {
        "feature_names": list(res.feature_names),
        "coefficients": [float(b) for b in res.beta],
        "lambda1": cfg.lambda1, "lambda2": cfg.lambda2, "method": cfg.method,
        "final_loss": _finite(res.final_loss), "train_loss": _finite(res.train_loss),
        "converged": res.converged, "diverged": res.diverged, "sweeps_used": res.sweeps_used,
        "flags": list(res.flags),
        "preprocessing": enc.to_dict() if enc is not None else None,
        "manifest": manifest,
    }


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    try:
        cfg = FitConfig(method=args.method, lambda1=args.lambda1, lambda2=args.lambda2,
                        max_sweeps=args.max_sweeps, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    raw = _load(args)
    ds, enc = _preprocess(raw, args.binarize_quantiles)
    res = fit(ds, cfg)
    write_trace(args.trace_out or _sibling(args.out, ".trace.csv"), cfg, res)
    manifest = _manifest(args, raw, time.perf_counter() - t0)
    _dump(args.out, _model_dict(args, cfg, res, enc, manifest))
    if res.diverged:
        print(f"fastsurv: {cfg.method} diverged after {res.sweeps_used} iterations", file=sys.stderr)
        return EXIT_DIVERGED
    if not res.converged:
        print(f"fastsurv: stopped at max_sweeps={cfg.max_sweeps} before converging", file=sys.stderr)
    return EXIT_OK


def _tag(v: float) -> str:
    return repr(float(v)).replace(".", "p")


def cmd_benchmark(args) -> int:
    t0 = time.perf_counter()
    bad = [m for m in args.methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods: {', '.join(bad)}")
    raw = _load(args)
    ds, _ = _preprocess(raw, args.binarize_quantiles)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    combos, configs, rejected = [], [], {}
    for m in args.methods:
        for l1 in args.lambda1_grid:
            for l2 in args.lambda2_grid:
                combos.append((m, l1, l2))
                try:
                    configs.append(FitConfig(method=m, lambda1=l1, lambda2=l2,
                                             max_sweeps=args.max_sweeps, tol=args.tol))
                except ValueError as exc:
                    rejected[(m, l1, l2)] = str(exc)
    results = iter(benchmark(ds, configs))
    runs = []
    for m, l1, l2 in combos:
        name = f"trace_{m}_l1_{_tag(l1)}_l2_{_tag(l2)}.csv"
        row = {"method": m, "lambda1": l1, "lambda2": l2, "trace_file": name}
        if (m, l1, l2) in rejected:
            # header-only trace keeps one file per grid cell
            write_trace(out_dir / name, FitConfig(method="quad_cd"),
                        _Empty())
            row.update(status="rejected", error=rejected[(m, l1, l2)])
            runs.append(row)
            continue
        r = next(results)
        if r["error"] is not None:
            write_trace(out_dir / name, r["config"], _Empty())
            row.update(status="error", error=r["error"])
        else:
            res = r["result"]
            write_trace(out_dir / name, r["config"], res)
            objs = [o for _, _, o, _ in res.loss_trace]
            status = "diverged" if res.diverged else ("converged" if res.converged else "max_sweeps")
            row.update(status=status, final_loss=_finite(res.final_loss),
                       sweeps_used=res.sweeps_used, monotone=is_monotone(objs),
                       blew_up=bool(res.diverged or not is_monotone(objs)), flags=list(res.flags))
        runs.append(row)
    _dump(out_dir / "summary.json",
          {"runs": runs, "manifest": _manifest(args, raw, time.perf_counter() - t0)})
    return EXIT_OK


class _Empty:
    loss_trace = ()


def _load_truth(path, ds):
    try:
        truth = json.loads(Path(path).read_text())
        beta_star = np.asarray(truth["beta_star"], dtype=float)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"cannot read ground truth {path}: {exc}") from None
    if beta_star.size != ds.p:
        raise DataError(f"ground truth has {beta_star.size} coefficients, data has {ds.p} features")
    return beta_star


def _score(train, test, beta):
    row = {"cph_loss": _finite(cph_loss(test, beta))}
    eta = test.X @ beta
    try:
        row["cindex"] = concordance_index(test.time, test.event, eta)
    except MetricError:
        row["cindex"] = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            row["ibs"] = _finite(integrated_brier_score(train, test, beta))
    except MetricError:
        row["ibs"] = None
    return row


def cmd_select(args) -> int:
    t0 = time.perf_counter()
    if args.folds < 1:
        raise UsageError("--folds must be >= 1")
    try:
        sel = SelectionConfig(k_max=args.k_max, beam_width=args.beam_width,
                              candidates_per_beam=args.candidates, score_start=args.score_start,
                              inner=FitConfig(method=args.inner_method, tol=1e-9, trace=False))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    raw = _load(args)
    if args.k_max > raw.p and args.binarize_quantiles == 0:
        raise UsageError(f"--k-max {args.k_max} exceeds the {raw.p} features")
    beta_star = None
    if args.truth:
        if args.binarize_quantiles:
            raise UsageError("--truth cannot be combined with --binarize-quantiles")
        beta_star = _load_truth(args.truth, raw)

    if args.folds == 1:
        splits = [(np.arange(raw.n), None)]
    else:
        splits = kfold_split(raw, args.folds, seed=args.seed)

    paths, rows = [], []
    for k, (tr_idx, te_idx) in enumerate(splits):
        train_raw = raw.subset(tr_idx)
        enc = Binarizer(args.binarize_quantiles).fit(train_raw) if args.binarize_quantiles else None
        train = enc.transform(train_raw) if enc else train_raw
        parts = [("train", train)]
        if te_idx is not None:
            test_raw = raw.subset(te_idx)
            parts.append(("test", enc.transform(test_raw) if enc else test_raw))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            path = beam_search(train, sel)
        for w in caught:
            print(f"fastsurv: fold {k}: {w.message}", file=sys.stderr)
        for rec in path_records(path, train.feature_names):
            paths.append({"fold": k, **rec})
        for state in path:
            for split, part in parts:
                if part.event.sum() == 0:
                    continue
                row = {"fold": k, "split": split, "support_size": state.size,
                       **_score(train, part, state.beta)}
                if beta_star is not None:
                    rs = support_recovery(state.beta, beta_star)
                    row.update(precision=rs.precision, recall=rs.recall, f1=rs.f1)
                else:
                    row.update(precision=None, recall=None, f1=None)
                rows.append(row)
    _dump(args.out, paths)
    _dump(args.metrics_out or _sibling(args.out, ".metrics.json"), rows)
    _dump(_sibling(args.out, ".manifest.json"), _manifest(args, raw, time.perf_counter() - t0))
    return EXIT_OK


def _read_model(path):
    try:
        model = json.loads(Path(path).read_text())
        names = [str(s) for s in model["feature_names"]]
        coef = np.asarray(model["coefficients"], dtype=float)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from None
    if coef.shape != (len(names),):
        raise DataError(f"model {path}: {coef.size} coefficients for {len(names)} features")
    return model, names, coef


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    model, names, coef = _read_model(args.model)
    raw = _load(args)
    ds = raw
    if model.get("preprocessing"):
        ds = Binarizer.from_dict(model["preprocessing"]).transform(raw)
    missing = [s for s in names if s not in ds.feature_names]
    if missing:
        raise DataError(f"model features absent from data: {', '.join(missing[:5])}")
    ds = ds.select_features(names)
    l1 = float(model.get("lambda1") or 0.0)
    l2 = float(model.get("lambda2") or 0.0)
    row = _score(ds, ds, coef)
    row["objective"] = _finite(row["cph_loss"] + l1 * np.abs(coef).sum() + l2 * (coef ** 2).sum())
    row["n"] = ds.n
    row["support_size"] = int(np.count_nonzero(coef))
    _dump(args.out, {"metrics": row, "model": str(args.model),
                     "manifest": _manifest(args, raw, time.perf_counter() - t0)})
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "benchmark": cmd_benchmark,
            "select": cmd_select, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fastsurv {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, MetricError, OSError) as exc:
        print(f"fastsurv {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"fastsurv {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
