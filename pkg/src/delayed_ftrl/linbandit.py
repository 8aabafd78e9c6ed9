"""Delayed FTRL for linear bandits with self-concordant barrier regularization.

Actions are sampled on the boundary of the unit Dikin ellipsoid of the
regularizer Hessian around the iterate; the scalar feedback is turned into a
loss-vector estimate through the matching Hessian square root, which keeps
the estimate unbiased.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import BallDomain, PolytopeDomain
from .errors import InvariantViolation, NumericalError, RejectedInput
from .regularizers import BallBarrier, PolytopeLogBarrier, QuadraticPlusBarrier
from .solver import solve_ftrl


def sym_sqrt(M):
    """Symmetric PD square root via eigendecomposition."""
    M = np.asarray(M, dtype=float)
    vals, vecs = np.linalg.eigh(M)
    if np.any(vals <= 0):
        raise NumericalError("matrix is not positive definite")
    return (vecs * np.sqrt(vals)) @ vecs.T


def sym_inv_sqrt(M):
    M = np.asarray(M, dtype=float)
    vals, vecs = np.linalg.eigh(M)
    if np.any(vals <= 0):
        raise NumericalError("matrix is not positive definite")
    return (vecs * (1.0 / np.sqrt(vals))) @ vecs.T


def sphere_sample(K, rng):
    """Uniform unit vector: normalized standard normals."""
    while True:
        v = rng.standard_normal(K)
        n = float(np.linalg.norm(v))
        if n > 1e-12:
            return v / n


def barrier_for_domain(dom):
    if isinstance(dom, BallDomain):
        return BallBarrier(dom.B)
    if isinstance(dom, PolytopeDomain):
        return PolytopeLogBarrier(dom.G, dom.h)
    raise RejectedInput(f"no self-concordant barrier registered for {type(dom).__name__}")


def sample_linban_action(w, reg, dom, rng, inv_sqrt_hess=None):
    """Play a = w + (hess R(w))^{-1/2} v with v uniform on the unit sphere.

    Returns (a, v).  Raises InvariantViolation if the step ever leaves the
    domain (it should not: the barrier Hessian dominates 1/gamma times the
    domain's own barrier, so the step stays inside the unit Dikin ellipsoid).
    """
    w = np.asarray(w, dtype=float)
    v = sphere_sample(w.shape[0], rng)
    M = inv_sqrt_hess if inv_sqrt_hess is not None else sym_inv_sqrt(reg.hess(w))
    a = w + M @ v
    if not dom.contains(a, tol=0.0):
        raise InvariantViolation("sampled action left the decision set")
    return a, v


def lin_estimate(scalar_feedback, v, reg, w, sqrt_hess=None):
    """Estimate K * (l.a) * (hess R(w))^{1/2} v from the same round's draw."""
    w = np.asarray(w, dtype=float)
    K = w.shape[0]
    M = sqrt_hess if sqrt_hess is not None else sym_sqrt(reg.hess(w))
    return K * float(scalar_feedback) * (M @ v)


@dataclass
class LinBanditParams:
    eta: float
    gamma: float
    B: float
    K: int
    T: int
    D: int
    d_max: int
    nu: float


def tune_linban(B, K, T, D, d_max, nu):
    """Learning rates prescribed for the linear-bandit regret guarantee."""
    if B <= 0 or K < 1 or T < 1 or d_max < 1 or D < 0 or nu <= 0:
        raise RejectedInput("need B > 0, K >= 1, T >= 1, d_max >= 1, D >= 0, nu > 0")
    gamma = min(
        1.0 / (64.0 * B * K * (1.0 + d_max)) ** 2,
        np.sqrt(nu * np.log(1.0 + np.sqrt(T)) / (16.0 * (B * K) ** 2 * T)),
    )
    eta_d = np.sqrt(B**2 / (16.0 * D)) if D > 0 else np.inf
    eta = min(1.0 / (16.0 * d_max) ** 2, eta_d)
    return LinBanditParams(
        eta=float(eta), gamma=float(gamma), B=float(B), K=int(K), T=int(T), D=int(D), d_max=int(d_max), nu=float(nu)
    )


def theorem_bound_lin(params):
    B, K, T, D, d, nu = params.B, params.K, params.T, params.D, params.d_max, params.nu
    return float(
        14.0 * B * K * np.sqrt(nu * T * np.log(T))
        + 8.0 * B * np.sqrt(D)
        + 2.0**14 * nu * B**2 * K**2 * (1.0 + d) ** 2 * np.log(T)
    )


def best_in_hindsight_lin(cum_loss, dom):
    """Exact comparator: closed form on the ball, an LP on polytopes."""
    L = np.asarray(cum_loss, dtype=float)
    if isinstance(dom, BallDomain):
        n = float(np.linalg.norm(L))
        if n == 0:
            return np.zeros(dom.K)
        return -dom.B * L / n
    from scipy.optimize import linprog

    res = linprog(L, A_ub=dom.G, b_ub=dom.h, bounds=(None, None), method="highs")
    if not res.success:
        raise RejectedInput("comparator LP failed; polytope may be unbounded or empty")
    return res.x


def shifted_comparator(u_star, w1, delta):
    """Comparator pulled toward the first iterate: (u - w1)/(1+delta) + w1."""
    return (np.asarray(u_star, dtype=float) - w1) / (1.0 + delta) + w1


class LinBanditLearner:
    """Stateful learner for one replication.

    ``step(t, arrivals)`` applies newly arrived scalar feedback (pairs of
    emission round and observed loss ``l . a``), solves the FTRL step, and
    samples the action to play.
    """

    def __init__(self, dom, params, rng, tol=1e-9, strict=True):
        self.dom = dom
        self.params = params
        self.rng = rng
        self.tol = tol
        self.strict = strict
        self.barrier = barrier_for_domain(dom)
        self.reg = QuadraticPlusBarrier(params.eta, params.gamma, self.barrier, dom.n_vars)
        self.L_hat = np.zeros(dom.n_vars)
        self.iterate = None
        self.records = {}
        self._recent = []
        self._window = params.d_max + 1
        self.w_t = None
        self.a_t = None
        self.infeasible_actions = 0
        self.diagnostics = {
            "max_est_norm_ratio": 0.0,
            "max_dikin_ratio": 0.0,
            "max_loss_norm_ratio": 0.0,
            "rounds": 0,
        }

    def step(self, t, arrivals):
        budget = 1.0 / (64.0 * (1.0 + self.params.d_max))
        for tau, feedback in arrivals:
            w_tau, v_tau, sqrt_tau = self.records.pop(tau)
            est = self.params.K * float(feedback) * (sqrt_tau @ v_tau)
            # |est|_{R,w_tau} = K |l.a|: the Hessian powers cancel exactly.
            ratio = self.params.K * abs(float(feedback)) / budget
            self.diagnostics["max_est_norm_ratio"] = max(self.diagnostics["max_est_norm_ratio"], ratio)
            if self.strict and ratio > 1.0 + 1e-9:
                raise InvariantViolation(f"estimate local norm exceeded its budget at round {tau}: ratio {ratio:.4f}")
            self.L_hat += est
        self.iterate = solve_ftrl(self.L_hat, self.reg, self.dom, warm_start=self.iterate, tol=self.tol)
        w = self.iterate.w
        H = self.reg.hess(w)
        for w_prev, H_prev in self._recent:
            dw = w - w_prev
            ratio = 2.0 * float(np.sqrt(dw @ H_prev @ dw))
            self.diagnostics["max_dikin_ratio"] = max(self.diagnostics["max_dikin_ratio"], ratio)
            if self.strict and ratio > 1.0 + 1e-9:
                raise InvariantViolation(f"iterate left the half-radius Dikin ellipsoid at round {t}")
        self._recent.append((w, H))
        if len(self._recent) > self._window:
            self._recent.pop(0)
        vals, vecs = np.linalg.eigh(H)
        if np.any(vals <= 0):
            raise NumericalError("regularizer Hessian lost positive definiteness")
        sqrt_h = (vecs * np.sqrt(vals)) @ vecs.T
        inv_sqrt_h = (vecs * (1.0 / np.sqrt(vals))) @ vecs.T
        try:
            a, v = sample_linban_action(w, self.reg, self.dom, self.rng, inv_sqrt_hess=inv_sqrt_h)
        except InvariantViolation:
            self.infeasible_actions += 1
            raise
        self.records[t] = (w, v, sqrt_h)
        self.w_t = w
        self.a_t = a
        self.diagnostics["rounds"] += 1
        return a

    def note_true_loss(self, loss):
        """Diagnostic: |l|_{R,w} <= sqrt(eta) since hess R >= (2/eta) I."""
        if self.w_t is None:
            return
        H = self.reg.hess(self.w_t)
        l = np.asarray(loss, dtype=float)
        norm = float(np.sqrt(l @ np.linalg.solve(H, l)))
        bound = float(np.sqrt(self.params.eta))
        self.diagnostics["max_loss_norm_ratio"] = max(self.diagnostics["max_loss_norm_ratio"], norm / bound)
