import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastsurv.surrogate import (CubicStepInput, DegenerateCurvatureError, QuadStepInput,
                                cubic_step, cubic_step_l1, cubic_surrogate, elasticnet_absorb,
                                quad_step, quad_step_l1, quad_surrogate)

finite = st.floats(-50, 50, allow_nan=False)
positive = st.floats(1e-3, 50)
nonneg = st.floats(0, 50)


def grid_min(fun, center, half_width, points=100_001):
    D = np.linspace(center - half_width, center + half_width, points)
    v = fun(D)
    k = int(np.argmin(v))
    return D[k], v[k]


def test_quad_step_basic():
    assert quad_step(2.0, 4.0) == -0.5
    assert quad_step(0.0, 0.0) == 0.0
    with pytest.raises(DegenerateCurvatureError):
        quad_step(1.0, 0.0)


def test_cubic_step_matches_sign_form():
    for a, b, L3 in [(1.0, 2.0, 3.0), (-4.0, 0.5, 1.0), (0.3, 0.0, 2.0)]:
        want = math.copysign(1.0, a) * (b - math.sqrt(b * b + 2 * L3 * abs(a))) / L3
        assert cubic_step(a, b, L3) == pytest.approx(want, rel=1e-12)


def test_cubic_step_reduces_to_newton():
    assert cubic_step(3.0, 2.0, 0.0) == -1.5
    with pytest.raises(DegenerateCurvatureError):
        cubic_step(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        cubic_step(1.0, -1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(finite, nonneg, positive)
def test_cubic_step_is_stationary_point(a, b, L3):
    D = cubic_step(a, b, L3)
    assert a + b * D + 0.5 * L3 * D * abs(D) == pytest.approx(0.0, abs=1e-9 * (1 + abs(a)))


@settings(max_examples=300, deadline=None)
@given(finite, positive, finite, nonneg)
def test_quad_l1_beats_grid(a, b, c, lam):
    D = quad_step_l1(QuadStepInput(a, b, c, lam))
    f = lambda d: quad_surrogate(d, a, b, c, lam)
    span = 2 * (abs(D) + abs(c) + (abs(a) + lam) / b + 1)
    _, best = grid_min(f, D, span, 20_001)
    assert f(D) <= best + 1e-9 * (1 + abs(best))


@settings(max_examples=300, deadline=None)
@given(finite, nonneg, positive, finite, nonneg)
def test_cubic_l1_beats_grid(a, b, c, d, lam):
    D = cubic_step_l1(CubicStepInput(a, b, c, d, lam))
    f = lambda x: cubic_surrogate(x, a, b, c, d, lam)
    span = 2 * (abs(D) + abs(d) + 1)
    _, best = grid_min(f, D, span, 20_001)
    assert f(D) <= best + 1e-9 * (1 + abs(best))


@pytest.mark.parametrize("a, c, lam, want", [
    (-5.0, 0.0, 1.0, 2.0),    # slope below -lam: move right
    (5.0, 0.0, 1.0, -2.0),    # slope above lam: move left
    (0.5, 0.0, 1.0, 0.0),     # dead zone keeps zero
    (1.5, 1.0, 1.0, -1.0),    # dead zone snaps a nonzero coefficient to zero
])
def test_quad_l1_branches(a, c, lam, want):
    assert quad_step_l1(QuadStepInput(a, 2.0, c, lam)) == pytest.approx(want)


def test_cubic_l1_dead_zone_snaps_to_zero():
    # s(-d) = a - b d - c d|d| / 2 = 0.3 - 0.5 - 0.25 = -0.45, inside [-1, 1]
    assert cubic_step_l1(CubicStepInput(0.3, 1.0, 1.0, 0.5, 1.0)) == -0.5


@pytest.mark.parametrize("d", [-2.0, -0.3, 0.0, 0.7, 3.0])
def test_cubic_l1_branches_cover_both_signs(d):
    rng = np.random.default_rng(int(10 * d) + 50)
    for _ in range(200):
        a, b, c, lam = rng.normal() * 5, rng.uniform(0, 3), rng.uniform(0.01, 3), rng.uniform(0, 3)
        D = cubic_step_l1(CubicStepInput(a, b, c, d, lam))
        # optimality: 0 lies in the subdifferential at D
        s = a + b * D + 0.5 * c * D * abs(D)
        u = d + D
        if u == 0.0:
            assert abs(s) <= lam + 1e-9
        else:
            assert s + lam * math.copysign(1.0, u) == pytest.approx(0.0, abs=1e-8 * (1 + abs(a)))


def test_cubic_l1_without_penalty_is_plain_step():
    for a, b, c in [(1.0, 2.0, 3.0), (-2.0, 0.1, 0.5)]:
        assert cubic_step_l1(CubicStepInput(a, b, c, 0.7, 0.0)) == pytest.approx(cubic_step(a, b, c))


def test_steps_are_continuous_across_branches():
    b, c, d, lam = 1.3, 0.8, 0.4, 0.9
    edge = b * d + 0.5 * c * d * d  # a at which s(-d) = 0
    for side in (-lam, lam):
        a0 = edge + side
        lo = cubic_step_l1(CubicStepInput(a0 - 1e-9, b, c, d, lam))
        hi = cubic_step_l1(CubicStepInput(a0 + 1e-9, b, c, d, lam))
        assert abs(lo - hi) < 1e-7
    q_edge = b * d
    for side in (-lam, lam):
        lo = quad_step_l1(QuadStepInput(q_edge + side - 1e-9, b, d, lam))
        hi = quad_step_l1(QuadStepInput(q_edge + side + 1e-9, b, d, lam))
        assert abs(lo - hi) < 1e-7


@settings(max_examples=200, deadline=None)
@given(finite, positive, finite, nonneg)
def test_l1_shrinks_toward_zero(a, b, c, lam):
    free = c + quad_step_l1(QuadStepInput(a, b, c, 0.0))
    pen = c + quad_step_l1(QuadStepInput(a, b, c, lam))
    assert abs(pen) <= abs(free) + 1e-12
    assert pen == 0.0 or math.copysign(1, pen) == math.copysign(1, free)


def test_flat_surrogate_cases():
    assert quad_step_l1(QuadStepInput(0.5, 0.0, 2.0, 1.0)) == -2.0
    assert cubic_step_l1(CubicStepInput(0.0, 0.0, 0.0, 1.0, 0.0)) == 0.0
    with pytest.raises(DegenerateCurvatureError):
        quad_step_l1(QuadStepInput(2.0, 0.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        quad_step_l1(QuadStepInput(1.0, 1.0, 0.0, -1.0))


@settings(max_examples=100, deadline=None)
@given(finite, positive, nonneg, finite, finite)
def test_elasticnet_absorb_preserves_surrogate(a, b, lam2, x, D):
    a2, b2 = elasticnet_absorb(a, b, lam2, x)
    lhs = a * D + 0.5 * b * D * D + lam2 * (x + D) ** 2
    rhs = a2 * D + 0.5 * b2 * D * D + lam2 * x * x
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)
