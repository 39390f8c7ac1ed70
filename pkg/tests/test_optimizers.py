import csv

import numpy as np
import pytest

from fastsurv import core
from fastsurv.data import binarize_features, generate_synthetic, make_flchain_like, sort_and_index
from fastsurv.optimizers import (TRACE_COLUMNS, FitConfig, MonotonicityError, benchmark,
                                 check_convergence, fit, is_monotone, write_trace)
from fastsurv.surrogate import quad_step

from conftest import random_dataset


@pytest.fixture(scope="module")
def synth():
    ds, _ = generate_synthetic(300, 8, 0.6, 3, 0.1, seed=2)
    return sort_and_index(ds)


def test_check_convergence_examples():
    assert check_convergence(0.0, 0.0, 1e-8)
    assert not check_convergence(1e-3, 0.0, 1e-8)
    assert not check_convergence(0.0, 1e-3, 1e-8)
    assert check_convergence(0.0, 0.0, 0.0)
    assert not check_convergence(1e-300, 0.0, 0.0)


def test_config_validation():
    with pytest.raises(ValueError, match="l1"):
        FitConfig(method="exact_newton", lambda1=0.5)
    with pytest.raises(ValueError):
        FitConfig(method="sgd")
    with pytest.raises(ValueError):
        FitConfig(lambda2=-1)
    with pytest.raises(ValueError):
        FitConfig(max_sweeps=0)


def test_quad_cd_stationary_on_tiny_problem():
    rng = np.random.default_rng(0)
    ds = sort_and_index(random_dataset(rng, n=10, p=2, censor=0.2))
    tol = 1e-9
    res = fit(ds, FitConfig(method="quad_cd", tol=tol, max_sweeps=100_000))
    assert res.converged
    g = core.full_beta_gradient(ds, ds.X @ res.beta)
    assert np.max(np.abs(g)) <= 10 * tol * max(1.0, np.max(np.abs(res.beta))) + 1e-7


def test_surrogates_and_baselines_agree(synth):
    ref = fit(synth, FitConfig(method="exact_newton", lambda2=1.0, tol=1e-12, max_sweeps=100))
    for m in ("quad_cd", "cubic_cd", "quasi_newton", "prox_newton"):
        res = fit(synth, FitConfig(method=m, lambda2=1.0, tol=1e-10, max_sweeps=20_000))
        assert res.converged, m
        np.testing.assert_allclose(res.beta, ref.beta, atol=1e-4)
        assert res.final_loss == pytest.approx(ref.final_loss, rel=1e-9)


@pytest.mark.parametrize("lam1, lam2", [(0.0, 0.0), (0.0, 1.0), (2.0, 0.0), (2.0, 5.0)])
@pytest.mark.parametrize("method", ["quad_cd", "cubic_cd"])
def test_every_update_is_monotone(synth, method, lam1, lam2):
    res = fit(synth, FitConfig(method=method, lambda1=lam1, lambda2=lam2, max_sweeps=50,
                               assert_monotone=True))
    seq = [res.loss_trace[0][2], *res.update_objectives]
    assert is_monotone(seq)
    assert is_monotone([o for _, _, o, _ in res.loss_trace])


@pytest.mark.parametrize("method", ["quad_cd", "cubic_cd", "quasi_newton", "prox_newton"])
def test_l1_fixed_point_conditions(synth, method):
    lam1, lam2, tol = 3.0, 0.5, 1e-10
    res = fit(synth, FitConfig(method=method, lambda1=lam1, lambda2=lam2, tol=tol,
                               max_sweeps=50_000))
    assert res.converged
    g = core.full_beta_gradient(synth, synth.X @ res.beta) + 2 * lam2 * res.beta
    zero = res.beta == 0
    assert zero.any() and (~zero).any()
    assert np.all(np.abs(g[zero]) <= lam1 + 1e-6)
    np.testing.assert_allclose(g[~zero] + lam1 * np.sign(res.beta[~zero]), 0.0, atol=1e-5)


def test_quadratic_step_never_exceeds_newton_step(synth):
    eta = np.zeros(synth.n)
    lip = core.lipschitz_constants(synth)
    for l in range(synth.p):
        d = core.coordinate_partials(synth, eta, l, 2)
        assert abs(quad_step(d.d1, lip.L2[l])) <= abs(d.d1 / d.d2) + 1e-15


def test_trace_layout(synth, tmp_path):
    cfg = FitConfig(method="cubic_cd", lambda1=0.5, lambda2=1.0, max_sweeps=5, tol=0.0)
    res = fit(synth, cfg)
    assert res.sweeps_used == 5 and not res.converged
    assert [t[0] for t in res.loss_trace] == list(range(6))
    assert all(t[2] >= t[1] for t in res.loss_trace)
    write_trace(tmp_path / "t.csv", cfg, res)
    rows = list(csv.reader((tmp_path / "t.csv").open()))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) == 7 and rows[1][0] == "cubic_cd"


def test_fit_rejects_bad_start(synth):
    with pytest.raises(ValueError):
        fit(synth, FitConfig(), beta0=np.zeros(3))


def test_warm_start_at_optimum_stops_immediately(synth):
    cfg = FitConfig(method="cubic_cd", lambda2=1.0, tol=1e-10, max_sweeps=5000)
    first = fit(synth, cfg)
    again = fit(synth, cfg, beta0=first.beta)
    assert again.sweeps_used <= 3


def test_benchmark_is_deterministic_and_keeps_going(synth):
    configs = [FitConfig(method=m, lambda1=l1, lambda2=1.0, max_sweeps=20)
               for m in ("quad_cd", "prox_newton") for l1 in (0.0, 1.0)]
    a = benchmark(synth, configs)
    b = benchmark(synth, configs)
    assert [r["config"] for r in a] == configs
    for x, y in zip(a, b):
        assert [t[:3] for t in x["result"].loss_trace] == [t[:3] for t in y["result"].loss_trace]


def test_benchmark_records_failures(monkeypatch, synth):
    import fastsurv.optimizers as opt
    real = opt.fit

    def flaky(ds, cfg, beta0=None):
        if cfg.method == "quasi_newton":
            raise RuntimeError("boom")
        return real(ds, cfg, beta0)

    monkeypatch.setattr(opt, "fit", flaky)
    out = benchmark(synth, [FitConfig(method="quasi_newton"), FitConfig(method="quad_cd", max_sweeps=3)])
    assert out[0]["error"].startswith("RuntimeError") and out[0]["result"] is None
    assert out[1]["error"] is None


def test_exact_newton_blows_up_on_binarized_stand_in():
    ds = sort_and_index(binarize_features(make_flchain_like(3000, seed=0), 40))
    res = fit(ds, FitConfig(method="exact_newton", lambda2=1.0, max_sweeps=10))
    losses = [t[1] for t in res.loss_trace]
    assert res.diverged or not is_monotone(losses)
    for m in ("quad_cd", "cubic_cd"):
        r = fit(ds, FitConfig(method=m, lambda2=1.0, max_sweeps=10, assert_monotone=True))
        assert is_monotone([t[2] for t in r.loss_trace])


def test_monotonicity_error_is_raised(monkeypatch, synth):
    import fastsurv._kernels as K
    import fastsurv.optimizers as opt

    real = K.cd_sweep

    def bad(*args):
        out = real(*args)
        args[-1][:] = 1e9
        return out

    monkeypatch.setattr(opt.K, "cd_sweep", bad)
    with pytest.raises(MonotonicityError):
        fit(synth, FitConfig(method="quad_cd", max_sweeps=2, assert_monotone=True))
