"""Regularizer calculus: values, gradients, Hessians, local norms, Dikin geometry.

Two regularizer families are provided.  ``EntropyLogBarrier`` is the hybrid
negative-entropy plus log-barrier used over nonnegative coordinate domains
(semi-bandits and occupancy measures).  ``QuadraticPlusBarrier`` combines a
scaled squared norm with a self-concordant barrier and is used over smooth
convex bodies (linear bandits).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, RejectedInput


def _as_vector(w):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise RejectedInput(f"expected a 1-d point, got shape {w.shape}")
    return w


class BallBarrier:
    """1-self-concordant barrier -log(1 - |w|^2/B^2) for the L2 ball of radius B."""

    nu = 1.0

    def __init__(self, radius):
        if radius <= 0:
            raise RejectedInput("ball radius must be positive")
        self.radius = float(radius)

    def _slack(self, w):
        return self.radius**2 - float(w @ w)

    def value(self, w):
        s = self._slack(w)
        if s <= 0:
            raise RejectedInput("point outside the open ball")
        return -np.log(s / self.radius**2)

    def grad(self, w):
        s = self._slack(w)
        if s <= 0:
            raise RejectedInput("point outside the open ball")
        return 2.0 * w / s

    def hess(self, w):
        s = self._slack(w)
        if s <= 0:
            raise RejectedInput("point outside the open ball")
        K = w.shape[0]
        return (2.0 / s) * np.eye(K) + (4.0 / s**2) * np.outer(w, w)

    def contains(self, w, margin=0.0):
        return float(np.linalg.norm(w)) <= self.radius - margin

    def max_step(self, w, dw):
        # Largest theta with w + theta*dw still strictly inside the ball.
        a = float(dw @ dw)
        if a == 0.0:
            return np.inf
        b = float(w @ dw)
        c = float(w @ w) - self.radius**2
        disc = b * b - a * c
        return (-b + np.sqrt(disc)) / a


class PolytopeLogBarrier:
    """Log barrier -sum log(h_i - g_i.w) for the polytope {w : Gw <= h}; nu = #rows."""

    def __init__(self, G, h):
        self.G = np.asarray(G, dtype=float)
        self.h = np.asarray(h, dtype=float)
        if self.G.ndim != 2 or self.h.shape != (self.G.shape[0],):
            raise RejectedInput("polytope barrier needs G (m,K) and h (m,)")
        self.nu = float(self.G.shape[0])

    def _slacks(self, w):
        return self.h - self.G @ w

    def value(self, w):
        s = self._slacks(w)
        if np.any(s <= 0):
            raise RejectedInput("point outside the open polytope")
        return float(-np.sum(np.log(s)))

    def grad(self, w):
        s = self._slacks(w)
        if np.any(s <= 0):
            raise RejectedInput("point outside the open polytope")
        return self.G.T @ (1.0 / s)

    def hess(self, w):
        s = self._slacks(w)
        if np.any(s <= 0):
            raise RejectedInput("point outside the open polytope")
        return (self.G.T * (1.0 / s**2)) @ self.G

    def contains(self, w, margin=0.0):
        return bool(np.all(self._slacks(w) >= margin))

    def max_step(self, w, dw):
        s = self._slacks(w)
        rate = self.G @ dw
        mask = rate > 0
        if not np.any(mask):
            return np.inf
        return float(np.min(s[mask] / rate[mask]))


class EntropyLogBarrier:
    """R(w) = sum_i w_i log(w_i)/eta - log(w_i)/gamma over strictly positive coordinates."""

    is_diagonal = True

    def __init__(self, eta, gamma, dim):
        if eta <= 0:
            raise RejectedInput("eta must be positive")
        if not 0 < gamma < 1:
            raise RejectedInput("gamma must lie in (0, 1)")
        self.eta = float(eta)
        self.gamma = float(gamma)
        self.dim = int(dim)

    def _check(self, w):
        w = _as_vector(w)
        if w.shape[0] != self.dim:
            raise RejectedInput(f"dimension mismatch: {w.shape[0]} != {self.dim}")
        if np.any(w <= 0):
            raise RejectedInput("EntropyLogBarrier requires strictly positive coordinates")
        return w

    def value(self, w):
        w = self._check(w)
        lw = np.log(w)
        return float(np.sum(w * lw) / self.eta - np.sum(lw) / self.gamma)

    def grad(self, w):
        w = self._check(w)
        return (np.log(w) + 1.0) / self.eta - 1.0 / (self.gamma * w)

    def hess_diag(self, w):
        w = self._check(w)
        return 1.0 / (self.eta * w) + 1.0 / (self.gamma * w * w)

    def hess(self, w):
        return np.diag(self.hess_diag(w))

    def max_step(self, w, dw):
        mask = dw < 0
        if not np.any(mask):
            return np.inf
        return float(np.min(w[mask] / -dw[mask]))


class QuadraticPlusBarrier:
    """R(w) = |w|^2/eta + Psi(w)/gamma with Psi a self-concordant barrier."""

    is_diagonal = False

    def __init__(self, eta, gamma, barrier, dim):
        if eta <= 0 or gamma <= 0:
            raise RejectedInput("eta and gamma must be positive")
        self.eta = float(eta)
        self.gamma = float(gamma)
        self.barrier = barrier
        self.dim = int(dim)

    def _check(self, w):
        w = _as_vector(w)
        if w.shape[0] != self.dim:
            raise RejectedInput(f"dimension mismatch: {w.shape[0]} != {self.dim}")
        return w

    def value(self, w):
        w = self._check(w)
        return float(w @ w) / self.eta + self.barrier.value(w) / self.gamma

    def grad(self, w):
        w = self._check(w)
        return 2.0 * w / self.eta + self.barrier.grad(w) / self.gamma

    def hess(self, w):
        w = self._check(w)
        K = w.shape[0]
        return (2.0 / self.eta) * np.eye(K) + self.barrier.hess(w) / self.gamma

    def max_step(self, w, dw):
        return self.barrier.max_step(w, dw)


def reg_value(reg, w):
    return reg.value(np.asarray(w, dtype=float))


def reg_grad(reg, w):
    return reg.grad(np.asarray(w, dtype=float))


def reg_hess(reg, w):
    return reg.hess(np.asarray(w, dtype=float))


class LocalNormContext:
    """A point together with a factorization of the regularizer Hessian there.

    Supports the local norm |l|_{R,w} = sqrt(l' H^-1 l) and its dual
    |x|*_{R,w} = sqrt(x' H x), and Dikin-ellipsoid membership tests.
    """

    def __init__(self, center, hess_diag=None, hess=None):
        self.center = np.asarray(center, dtype=float)
        if hess_diag is not None:
            d = np.asarray(hess_diag, dtype=float)
            if np.any(d <= 0):
                raise NumericalError("Hessian diagonal must be positive")
            self._diag = d
            self._chol = None
        elif hess is not None:
            H = np.asarray(hess, dtype=float)
            try:
                self._chol = np.linalg.cholesky(H)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("Hessian is not positive definite") from exc
            self._diag = None
            self._hess = H
        else:
            raise RejectedInput("provide hess_diag or hess")

    @classmethod
    def from_regularizer(cls, reg, w):
        w = np.asarray(w, dtype=float)
        if getattr(reg, "is_diagonal", False):
            return cls(w, hess_diag=reg.hess_diag(w))
        return cls(w, hess=reg.hess(w))

    @property
    def is_diagonal(self):
        return self._diag is not None

    def norm(self, l):
        l = np.asarray(l, dtype=float)
        if self._diag is not None:
            return float(np.sqrt(np.sum(l * l / self._diag)))
        y = np.linalg.solve(self._chol, l)
        return float(np.sqrt(y @ y))

    def dual_norm(self, x):
        x = np.asarray(x, dtype=float)
        if self._diag is not None:
            return float(np.sqrt(np.sum(self._diag * x * x)))
        y = self._chol.T @ x
        return float(np.sqrt(y @ y))

    def factorization_error(self):
        """Relative reconstruction error of the stored factorization."""
        if self._diag is not None:
            return 0.0
        H = self._chol @ self._chol.T
        return float(np.linalg.norm(H - self._hess) / max(np.linalg.norm(self._hess), 1e-300))


def local_norm(l, ctx):
    return ctx.norm(l)


def local_norm_dual(x, ctx):
    return ctx.dual_norm(x)


def dikin_contains(ctx, x, r):
    """True iff x lies in the Dikin ellipsoid of radius r around the context center."""
    if r < 0:
        return False
    return ctx.dual_norm(np.asarray(x, dtype=float) - ctx.center) <= r


def sample_dikin(reg, w, radius, n_samples, rng):
    """Sample points uniformly from the Dikin ellipsoid of the given radius around w."""
    w = np.asarray(w, dtype=float)
    K = w.shape[0]
    z = rng.standard_normal((n_samples, K))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    scale = rng.random(n_samples) ** (1.0 / K)
    u = z * scale[:, None] * radius
    if getattr(reg, "is_diagonal", False):
        step = u / np.sqrt(reg.hess_diag(w))[None, :]
    else:
        vals, vecs = np.linalg.eigh(reg.hess(w))
        if np.any(vals <= 0):
            raise NumericalError("Hessian is not positive definite")
        inv_sqrt = (vecs * (1.0 / np.sqrt(vals))) @ vecs.T
        step = u @ inv_sqrt
    return w[None, :] + step


def hessian_sandwich_check(reg, w, radius, n_samples, rng):
    """Worst generalized-eigenvalue ratio between Hessians inside a Dikin ball.

    Samples points w' in the Dikin ellipsoid of the given radius around w and
    returns the largest factor c such that neither H(w') <= c H(w) nor
    H(w) <= c H(w') can be improved.  Used as a diagnostic for the factor-4
    Hessian stability precondition (radius <= 1/2 should give ratio <= 4).
    """
    w = np.asarray(w, dtype=float)
    if radius < 0 or radius > 0.5:
        raise RejectedInput("radius must lie in [0, 1/2]")
    if radius == 0 or n_samples == 0:
        return 1.0
    points = sample_dikin(reg, w, radius, n_samples, rng)
    worst = 1.0
    if getattr(reg, "is_diagonal", False):
        d0 = reg.hess_diag(w)
        for wp in points:
            dp = reg.hess_diag(wp)
            ratio = max(float(np.max(dp / d0)), float(np.max(d0 / dp)))
            worst = max(worst, ratio)
    else:
        H0 = reg.hess(w)
        vals, vecs = np.linalg.eigh(H0)
        inv_sqrt = (vecs * (1.0 / np.sqrt(vals))) @ vecs.T
        for wp in points:
            M = inv_sqrt @ reg.hess(wp) @ inv_sqrt
            ev = np.linalg.eigvalsh(M)
            ratio = max(float(ev[-1]), 1.0 / float(ev[0]))
            worst = max(worst, ratio)
    return worst
