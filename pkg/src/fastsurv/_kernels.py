"""Compiled O(n) passes over risk-set prefixes.

All kernels work in stored order (nonincreasing time), where the risk set
of an event group is the prefix ``[0, gend)``.  ``gend`` / ``gcnt`` are the
prefix ends and event counts of the tie groups holding events.  Moments use
the feature shifted by ``center`` to limit cancellation; the shift cancels
exactly in every derivative.
"""

import math

import numpy as np
from numba import njit, prange

CACHE = True
# divisions by an underflowed risk-set sum give inf/nan instead of raising
NJ = dict(cache=CACHE, error_model="numpy")


@njit(**NJ)
def _max_offset(eta, x, b):
    m = -np.inf
    for k in range(eta.size):
        v = eta[k] + b * x[k]
        if v > m:
            m = v
    return m


@njit(**NJ)
def partials(x, eta, b, center, gend, gcnt, xev_sum, order):
    """d1, d2, d3 of the loss along ``x`` at ``eta + b * x``.

    ``order`` = 1 skips the second and third moments, 2 skips the third.
    ``xev_sum`` is the raw (unshifted) sum of ``x`` over event rows.
    """
    m = _max_offset(eta, x, b)
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    c0 = 0.0
    c1 = 0.0
    c2 = 0.0
    c3 = 0.0
    d1 = 0.0
    d2 = 0.0
    d3 = 0.0
    nev = 0.0
    g = 0
    G = gend.size
    for k in range(eta.size):
        w = math.exp(eta[k] + b * x[k] - m)
        xc = x[k] - center
        # Neumaier-compensated running sums
        t = s0 + w
        if abs(s0) >= abs(w):
            c0 += (s0 - t) + w
        else:
            c0 += (w - t) + s0
        s0 = t
        v = w * xc
        t = s1 + v
        if abs(s1) >= abs(v):
            c1 += (s1 - t) + v
        else:
            c1 += (v - t) + s1
        s1 = t
        if order >= 2:
            v = v * xc
            t = s2 + v
            if abs(s2) >= abs(v):
                c2 += (s2 - t) + v
            else:
                c2 += (v - t) + s2
            s2 = t
            if order >= 3:
                v = v * xc
                t = s3 + v
                if abs(s3) >= abs(v):
                    c3 += (s3 - t) + v
                else:
                    c3 += (v - t) + s3
                s3 = t
        while g < G and gend[g] == k + 1:
            cnt = gcnt[g]
            S0 = s0 + c0
            mu1 = (s1 + c1) / S0
            d1 += cnt * mu1
            nev += cnt
            if order >= 2:
                mu2 = (s2 + c2) / S0
                var = mu2 - mu1 * mu1
                if var < 0.0:
                    var = 0.0
                d2 += cnt * var
                if order >= 3:
                    mu3 = (s3 + c3) / S0
                    d3 += cnt * (mu3 + 2.0 * mu1 * mu1 * mu1 - 3.0 * mu2 * mu1)
            g += 1
    d1 -= xev_sum - center * nev
    return d1, d2, d3


@njit(**NJ)
def loss_offset(x, eta, b, gend, gcnt, event):
    """Negative log partial likelihood at ``eta + b * x``.

    The risk-set sums are rescaled to the running maximum of the prefix
    rather than the global one, so a prefix far below the global maximum
    cannot underflow to zero.
    """
    m = -np.inf
    s0 = 0.0
    c0 = 0.0
    total = 0.0
    ct = 0.0
    g = 0
    G = gend.size
    for k in range(eta.size):
        e = eta[k] + b * x[k]
        if e > m:
            r = math.exp(m - e)
            s0 *= r
            c0 *= r
            m = e
        w = math.exp(e - m)
        t = s0 + w
        if abs(s0) >= abs(w):
            c0 += (s0 - t) + w
        else:
            c0 += (w - t) + s0
        s0 = t
        if event[k] != 0:
            v = -e
            t = total + v
            if abs(total) >= abs(v):
                ct += (total - t) + v
            else:
                ct += (v - t) + total
            total = t
        while g < G and gend[g] == k + 1:
            v = gcnt[g] * (m + math.log(s0 + c0))
            t = total + v
            if abs(total) >= abs(v):
                ct += (total - t) + v
            else:
                ct += (v - t) + total
            total = t
            g += 1
    return total + ct


@njit(**NJ)
def loss(eta, gend, gcnt, event):
    return loss_offset(eta, eta, 0.0, gend, gcnt, event)


@njit(**NJ)
def eta_grad_hess(eta, gend, gcnt, event, want_hess):
    """Gradient of the loss in eta and (optionally) the Hessian diagonal."""
    n = eta.size
    m = -np.inf
    for k in range(n):
        if eta[k] > m:
            m = eta[k]
    w = np.empty(n)
    G = gend.size
    S0 = np.empty(G)
    s0 = 0.0
    c0 = 0.0
    g = 0
    for k in range(n):
        w[k] = math.exp(eta[k] - m)
        t = s0 + w[k]
        if abs(s0) >= abs(w[k]):
            c0 += (s0 - t) + w[k]
        else:
            c0 += (w[k] - t) + s0
        s0 = t
        while g < G and gend[g] == k + 1:
            S0[g] = s0 + c0
            g += 1
    grad = np.empty(n)
    hess = np.zeros(n)
    a1 = 0.0
    a2 = 0.0
    g = G - 1
    for k in range(n - 1, -1, -1):
        while g >= 0 and gend[g] > k:
            a1 += gcnt[g] / S0[g]
            a2 += gcnt[g] / (S0[g] * S0[g])
            g -= 1
        grad[k] = w[k] * a1 - event[k]
        if want_hess:
            hess[k] = w[k] * a1 - w[k] * w[k] * a2
    return grad, hess


@njit(**NJ)
def soft_quad_l1(a, b, c, lam):
    """argmin_D a*D + b*D^2/2 + lam*|c + D| for b > 0."""
    r = b * c - a
    if r < -lam:
        return -(a - lam) / b
    if r > lam:
        return -(a + lam) / b
    return -c


@njit(**NJ)
def cubic_newton(a, b, c):
    """argmin_D a*D + b*D^2/2 + c*|D|^3/6, rationalized so c = 0 is safe."""
    if a == 0.0:
        return 0.0
    return -2.0 * a / (b + math.sqrt(b * b + 2.0 * c * abs(a)))


@njit(**NJ)
def soft_cubic_l1(a, b, c, d, lam):
    """argmin_D a*D + b*D^2/2 + c*|D|^3/6 + lam*|d + D|.

    The smooth part has derivative a + b*D + c*D*|D|/2; its value at the
    kink D = -d decides which side of the kink the minimizer sits on.
    """
    s = a - b * d - 0.5 * c * d * abs(d)
    if s < -lam:
        return cubic_newton(a + lam, b, c)
    if s > lam:
        return cubic_newton(a - lam, b, c)
    return -d


@njit(**NJ)
def penalty(beta, lam1, lam2):
    s1 = 0.0
    s2 = 0.0
    for j in range(beta.size):
        s1 += abs(beta[j])
        s2 += beta[j] * beta[j]
    return lam1 * s1 + lam2 * s2


@njit(**NJ)
def cd_sweep(Xf, eta, beta, coords, L2, L3, center, gend, gcnt, xev_sum, event,
             lam1, lam2, cubic, record, obj_out):
    """One cyclic pass of surrogate coordinate descent over ``coords``.

    Updates ``beta`` and ``eta`` in place and returns the largest absolute
    coefficient change.  With ``record`` set, the penalized objective after
    every coordinate update is written to ``obj_out``.
    """
    biggest = 0.0
    for idx in range(coords.size):
        l = coords[idx]
        x = Xf[:, l]
        bl = beta[l]
        if cubic:
            d1, d2, _ = partials(x, eta, 0.0, center[l], gend, gcnt, xev_sum[l], 2)
            a = d1 + 2.0 * lam2 * bl
            b = d2 + 2.0 * lam2
            c = L3[l]
            if b <= 0.0 and c <= 0.0:
                delta = 0.0
            else:
                delta = soft_cubic_l1(a, b, c, bl, lam1)
        else:
            d1, _, _ = partials(x, eta, 0.0, center[l], gend, gcnt, xev_sum[l], 1)
            a = d1 + 2.0 * lam2 * bl
            b = L2[l] + 2.0 * lam2
            if b <= 0.0:
                delta = 0.0
            else:
                delta = soft_quad_l1(a, b, bl, lam1)
        if delta != 0.0:
            beta[l] = bl + delta
            for k in range(eta.size):
                eta[k] += delta * x[k]
            if abs(delta) > biggest:
                biggest = abs(delta)
        if record:
            obj_out[idx] = loss(eta, gend, gcnt, event) + penalty(beta, lam1, lam2)
    return biggest


@njit(**NJ)
def optimize_single(x, eta, L2, L3, center, gend, gcnt, xev_sum, event, cubic, tol, max_iter,
                    warm):
    """Minimize the loss over one coefficient added on top of ``eta``.

    Starts from 0 (or, with ``warm``, from the quadratic-surrogate step
    taken at 0) and iterates surrogate steps until the step falls below
    ``tol * max(1, |b|)``.  Returns (coefficient, loss).
    """
    b = 0.0
    if L2 > 0.0:
        if warm:
            d1, _, _ = partials(x, eta, 0.0, center, gend, gcnt, xev_sum, 1)
            b = -d1 / L2
        for _ in range(max_iter):
            if cubic:
                d1, d2, _ = partials(x, eta, b, center, gend, gcnt, xev_sum, 2)
                delta = cubic_newton(d1, d2, L3)
            else:
                d1, _, _ = partials(x, eta, b, center, gend, gcnt, xev_sum, 1)
                delta = -d1 / L2
            b += delta
            if abs(delta) <= tol * max(1.0, abs(b)):
                break
    return b, loss_offset(x, eta, b, gend, gcnt, event)


@njit(parallel=True, **NJ)
def rank_all(Xf, eta, cand, L2, L3, center, gend, gcnt, xev_sum, event, cubic, tol, max_iter,
             warm):
    nc = cand.size
    coef = np.empty(nc)
    losses = np.empty(nc)
    for i in prange(nc):
        l = cand[i]
        coef[i], losses[i] = optimize_single(Xf[:, l], eta, L2[l], L3[l], center[l], gend, gcnt,
                                             xev_sum[l], event, cubic, tol, max_iter, warm)
    return coef, losses


@njit(**NJ)
def quadratic_model_cd(A, lin, beta, lam1, lam2, max_pass, tol):
    """Minimize ``lin @ D + D @ A @ D / 2 + lam2 |beta + D|^2 + lam1 |beta + D|_1``
    by cyclic coordinate descent; returns the step D."""
    p = beta.size
    D = np.zeros(p)
    AD = np.zeros(p)
    for _ in range(max_pass):
        biggest = 0.0
        for j in range(p):
            curv = A[j, j] + 2.0 * lam2
            if curv <= 0.0:
                continue
            u = beta[j] + D[j]
            grad = lin[j] + AD[j] + 2.0 * lam2 * u
            step = soft_quad_l1(grad, curv, u, lam1)
            if step != 0.0:
                D[j] += step
                for i in range(p):
                    AD[i] += A[i, j] * step
                if abs(step) > biggest:
                    biggest = abs(step)
        if biggest <= tol:
            break
    return D
