"""Hot numeric kernels.

The damped-Newton solve on the capped simplex is executed every round of a
semi-bandit run and dominates total runtime, so it is compiled with numba
when available.  A pure-numpy/python twin of the same function is kept as a
fallback; both paths execute the identical sequence of floating point
operations, so results agree bit-for-bit.

Backend selection: numba is used when importable unless the environment
variable ``DELAYED_FTRL_PURE_NUMPY`` is set to a non-empty value other than
``0``.
"""

from __future__ import annotations

import math
import os

import numpy as np

FORCE_PURE_NUMPY = os.environ.get("DELAYED_FTRL_PURE_NUMPY", "0") not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def capped_simplex_newton_py(L, eta, gamma, mu, budget, w0, tol, max_iter):
    """Damped Newton for the entropy+log-barrier FTRL step on the capped simplex.

    Minimizes ``L.w + sum(w log w)/eta - sum(log w)/gamma - mu*sum(log(1-w))``
    subject to ``sum(w) = budget``, starting from the strictly feasible ``w0``.
    The box penalty weight ``mu`` keeps ``w < 1``.

    Returns ``(w, kkt_residual, iterations, min_slack)``.  The residual is
    ``max_i |g_i - mean(g)|``, the infinity norm of the gradient projected
    onto the simplex slice.
    """
    K = w0.shape[0]
    w = w0.copy()
    inv_eta = 1.0 / eta
    inv_gamma = 1.0 / gamma
    g = np.empty(K)
    h = np.empty(K)
    d = np.empty(K)
    res = math.inf
    it = 0
    for it in range(max_iter + 1):
        gsum = 0.0
        for i in range(K):
            wi = w[i]
            g[i] = L[i] + (math.log(wi) + 1.0) * inv_eta - inv_gamma / wi + mu / (1.0 - wi)
            gsum += g[i]
        gbar = gsum / K
        res = 0.0
        for i in range(K):
            r = abs(g[i] - gbar)
            if r > res:
                res = r
        if res <= tol or it == max_iter:
            break
        s1 = 0.0
        s2 = 0.0
        for i in range(K):
            wi = w[i]
            h[i] = inv_eta / wi + inv_gamma / (wi * wi) + mu / ((1.0 - wi) * (1.0 - wi))
            s1 += g[i] / h[i]
            s2 += 1.0 / h[i]
        nu = -s1 / s2
        gd = 0.0
        for i in range(K):
            d[i] = -(g[i] + nu) / h[i]
            gd += g[i] * d[i]
        # Fraction-to-boundary: keep 0 < w < 1 strictly.
        theta = 1.0
        for i in range(K):
            if d[i] < 0.0:
                cap = 0.99 * (w[i] / -d[i])
            elif d[i] > 0.0:
                cap = 0.99 * ((1.0 - w[i]) / d[i])
            else:
                continue
            if cap < theta:
                theta = cap
        f0 = 0.0
        for i in range(K):
            wi = w[i]
            f0 += L[i] * wi + wi * math.log(wi) * inv_eta - math.log(wi) * inv_gamma - mu * math.log(1.0 - wi)
        # Armijo backtracking (c=0.25, shrink 0.5).
        for _bt in range(60):
            f1 = 0.0
            for i in range(K):
                wi = w[i] + theta * d[i]
                f1 += L[i] * wi + wi * math.log(wi) * inv_eta - math.log(wi) * inv_gamma - mu * math.log(1.0 - wi)
            if f1 <= f0 + 0.25 * theta * gd:
                break
            theta *= 0.5
        for i in range(K):
            w[i] = w[i] + theta * d[i]
    slack = math.inf
    for i in range(K):
        if w[i] < slack:
            slack = w[i]
        if 1.0 - w[i] < slack:
            slack = 1.0 - w[i]
    return w, res, it, slack


if HAS_NUMBA:
    capped_simplex_newton_jit = njit(cache=True)(capped_simplex_newton_py)
else:  # pragma: no cover
    capped_simplex_newton_jit = capped_simplex_newton_py


def capped_simplex_newton(L, eta, gamma, mu, budget, w0, tol, max_iter):
    """Dispatch to the compiled kernel unless the pure-numpy path is forced."""
    if HAS_NUMBA and not FORCE_PURE_NUMPY:
        return capped_simplex_newton_jit(L, eta, gamma, mu, budget, w0, tol, max_iter)
    return capped_simplex_newton_py(L, eta, gamma, mu, budget, w0, tol, max_iter)


def active_backend():
    return "numba" if (HAS_NUMBA and not FORCE_PURE_NUMPY) else "numpy"
