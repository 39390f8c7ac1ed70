"""Closed-form minimizers of one-dimensional quadratic and cubic surrogates.

Notation per coordinate: ``a`` is the first derivative of the loss,
``b`` the curvature (the Lipschitz constant ``L2`` for the quadratic model,
the exact second derivative for the cubic one), ``L3`` the cubic
coefficient and ``x`` the current coefficient value.  Every function
returns the step ``delta`` to add to ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import _kernels as K


class DegenerateCurvatureError(ValueError):
    """The surrogate has no curvature but a nonzero slope, so it is unbounded."""


@dataclass(frozen=True)
class QuadStepInput:
    a: float
    b: float
    c: float
    lambda1: float = 0.0


@dataclass(frozen=True)
class CubicStepInput:
    a: float
    b: float
    c: float
    d: float
    lambda1: float = 0.0


def quad_surrogate(delta, a, b, x=0.0, lambda1=0.0):
    """Value of ``a*delta + b*delta^2/2 + lambda1*|x + delta|``."""
    return a * delta + 0.5 * b * delta ** 2 + lambda1 * abs(x + delta)


def cubic_surrogate(delta, a, b, L3, x=0.0, lambda1=0.0):
    return a * delta + 0.5 * b * delta ** 2 + L3 * abs(delta) ** 3 / 6.0 + lambda1 * abs(x + delta)


def _flat_l1(a, x, lambda1):
    # a*D + lambda1*|x + D| is bounded below only when |a| <= lambda1
    if a == 0.0 and lambda1 == 0.0:
        return 0.0
    if abs(a) <= lambda1:
        return -x
    raise DegenerateCurvatureError(f"no curvature and slope {a} exceeds lambda1={lambda1}")


def quad_step(a: float, L2: float) -> float:
    if a == 0.0:
        return 0.0
    if L2 <= 0.0:
        raise DegenerateCurvatureError(f"quadratic step with L2={L2} and slope {a}")
    return -a / L2


def cubic_step(a: float, b: float, L3: float) -> float:
    """Minimizer of ``a*D + b*D^2/2 + L3*|D|^3/6``.

    Written as ``-2a / (b + sqrt(b^2 + 2 L3 |a|))``, algebraically equal to
    ``sgn(a) (b - sqrt(b^2 + 2 L3 |a|)) / L3`` but free of cancellation and
    equal to the Newton step ``-a/b`` when ``L3 = 0``.
    """
    if b < 0 or L3 < 0:
        raise ValueError("cubic step needs b >= 0 and L3 >= 0")
    if a == 0.0:
        return 0.0
    if b == 0.0 and L3 == 0.0:
        raise DegenerateCurvatureError(f"cubic step with b = L3 = 0 and slope {a}")
    return float(K.cubic_newton(a, b, L3))


def quad_step_l1(inp: QuadStepInput) -> float:
    """Soft-thresholded quadratic step.

    Moves to ``-(a - lambda1)/b`` or ``-(a + lambda1)/b`` when
    ``b*c - a`` falls below ``-lambda1`` or above ``lambda1``; otherwise
    the coefficient lands exactly on zero (step ``-c``).
    """
    if inp.lambda1 < 0:
        raise ValueError("lambda1 must be >= 0")
    if inp.b <= 0.0:
        return _flat_l1(inp.a, inp.c, inp.lambda1)
    return float(K.soft_quad_l1(inp.a, inp.b, inp.c, inp.lambda1))


def cubic_step_l1(inp: CubicStepInput) -> float:
    """Minimizer of ``a*D + b*D^2/2 + c*|D|^3/6 + lambda1*|d + D|``.

    The smooth part has the increasing derivative
    ``s(D) = a + b*D + c*D*|D|/2``, so the whole objective is minimized at
    the kink ``D = -d`` when ``|s(-d)| <= lambda1``.  Otherwise the
    minimizer lies on the side where the penalty slope is ``+lambda1``
    (``s(-d) < -lambda1``) or ``-lambda1`` (``s(-d) > lambda1``), and is the
    plain cubic step for the shifted slope ``a +/- lambda1``.  For ``d >= 0``
    the test quantity equals ``a - b*d - c*d^2/2``; for ``d < 0`` its
    negation is ``-(a - b*d) - c*d^2/2``.
    """
    if inp.lambda1 < 0:
        raise ValueError("lambda1 must be >= 0")
    if inp.b < 0 or inp.c < 0:
        raise ValueError("cubic step needs b >= 0 and c >= 0")
    if inp.b == 0.0 and inp.c == 0.0:
        return _flat_l1(inp.a, inp.d, inp.lambda1)
    return float(K.soft_cubic_l1(inp.a, inp.b, inp.c, inp.d, inp.lambda1))


def elasticnet_absorb(a: float, b: float, lambda2: float, x: float) -> tuple[float, float]:
    """Fold ``lambda2 * (x + D)^2`` into the surrogate's linear and
    quadratic coefficients, leaving only the l1 term for the prox step."""
    if lambda2 < 0:
        raise ValueError("lambda2 must be >= 0")
    return a + 2.0 * lambda2 * x, b + 2.0 * lambda2
