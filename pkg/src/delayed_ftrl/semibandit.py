"""Delayed FTRL for combinatorial semi-bandits.

Per round: solve the FTRL step over the hull of the action set with the
entropy/log-barrier regularizer, decompose the mean vector into a
distribution over actions with exactly matching marginals, play a sample,
and importance-weight the observed coordinates when their (possibly delayed)
feedback arrives.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .domains import CappedSimplexHull, VertexHull
from .errors import InvariantViolation, NumericalError, RejectedInput
from .regularizers import EntropyLogBarrier
from .solver import solve_ftrl


class MSets:
    """All binary vectors with exactly B ones out of K coordinates."""

    kind = "m_sets"

    def __init__(self, K, B):
        if not 1 <= B <= K:
            raise RejectedInput(f"need 1 <= B <= K, got B={B}, K={K}")
        self.K = int(K)
        self.B = int(B)

    def domain(self):
        return CappedSimplexHull(self.K, self.B)

    def max_l1(self):
        return self.B

    def enumerate_vertices(self):
        V = np.zeros((0, self.K))
        rows = []
        for comb in combinations(range(self.K), self.B):
            row = np.zeros(self.K)
            row[list(comb)] = 1.0
            rows.append(row)
        return np.array(rows) if rows else V


class ExplicitVertices:
    """An explicit list of binary action vectors."""

    kind = "explicit"

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[0] == 0 or not np.all((V == 0) | (V == 1)):
            raise RejectedInput("vertices must be a nonempty list of binary vectors")
        self.vertices = V
        self.K = V.shape[1]
        self.B = int(np.max(np.sum(V, axis=1)))

    def domain(self):
        return VertexHull(self.vertices)

    def max_l1(self):
        return self.B

    def enumerate_vertices(self):
        return self.vertices.copy()


def systematic_sample(w, budget, rng):
    """Systematic sampling on the circle of cumulative weights.

    Draws a B-subset whose inclusion probabilities equal ``w`` exactly:
    one uniform rotation places B points spaced one unit apart on a circle
    of circumference B, and each point selects the coordinate whose
    cumulative-weight interval contains it.
    """
    cum = np.cumsum(w)
    cum[-1] = budget  # pin the float drift of the final boundary
    points = rng.random() + np.arange(budget)
    idx = np.searchsorted(cum, points, side="right")
    if len(np.unique(idx)) != budget:
        raise NumericalError("systematic sampler selected a coordinate twice; w exceeds the unit box")
    a = np.zeros(len(w), dtype=np.int64)
    a[idx] = 1
    return a


def systematic_support(w, budget):
    """Exact outcome distribution of the systematic sampler as [(prob, action)].

    The selected subset is piecewise constant in the rotation; the pieces are
    delimited by the fractional parts of the cumulative weights.
    """
    w = np.asarray(w, dtype=float)
    cum = np.cumsum(w)
    cum[-1] = budget
    breaks = np.unique(np.concatenate([[0.0, 1.0], np.mod(cum, 1.0)]))
    support = {}
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        idx = np.searchsorted(cum, mid + np.arange(budget), side="right")
        key = tuple(int(i) for i in idx)
        support[key] = support.get(key, 0.0) + (hi - lo)
    out = []
    for key, prob in sorted(support.items()):
        a = np.zeros(len(w), dtype=np.int64)
        a[list(key)] = 1
        out.append((prob, a))
    return out


def caratheodory_decompose(vertices, w, tol=1e-9):
    """Decompose ``w`` in the hull of binary ``vertices`` as [(weight, index)].

    Greedy scale-out first: repeatedly remove the largest feasible multiple of
    the vertex whose support still fits inside the residual.  The greedy pass
    can stall on adversarial vertex sets, in which case an exact LP fallback
    produces a basic (hence sparse) decomposition.
    """
    V = np.asarray(vertices, dtype=float)
    w = np.asarray(w, dtype=float)
    n = V.shape[0]
    r = w.copy()
    rem = 1.0
    weights = np.zeros(n)
    sizes = V.sum(axis=1)
    for _ in range(n + V.shape[1] + 2):
        if rem <= tol and np.max(np.abs(r)) <= tol:
            break
        support = r > 1e-12
        best_j, best_key = -1, (0.0, -1.0)
        for j in range(n):
            if weights[j] > 0:
                continue
            vj = V[j] > 0
            if np.any(vj & ~support):
                continue
            lam = rem if sizes[j] == 0 else float(np.min(r[vj]))
            lam = min(lam, rem)
            key = (lam, sizes[j])  # on lambda ties prefer the larger vertex
            if key > best_key:
                best_key, best_j = key, j
        best_lam = best_key[0]
        if best_j < 0 or best_lam <= tol:
            break
        weights[best_j] += best_lam
        r = r - best_lam * V[best_j]
        rem -= best_lam
    if not (rem <= tol and np.max(np.abs(r)) <= tol):
        weights = _decompose_lp(V, w, tol)
    total = float(np.sum(weights))
    if abs(total - 1.0) > 1e-7:
        raise NumericalError("decomposition weights failed to sum to one")
    weights = weights / total
    idx = np.where(weights > 0)[0]
    return [(float(weights[j]), int(j)) for j in idx]


def _decompose_lp(V, w, tol):
    from scipy.optimize import linprog

    n, K = V.shape
    c = np.concatenate([np.zeros(n), np.ones(2 * K)])
    A_eq = np.zeros((K + 1, n + 2 * K))
    A_eq[:K, :n] = V.T
    A_eq[:K, n : n + K] = np.eye(K)
    A_eq[:K, n + K :] = -np.eye(K)
    A_eq[K, :n] = 1.0
    b_eq = np.concatenate([w, [1.0]])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success or res.fun > 1e-6:
        raise RejectedInput("mean vector lies outside the convex hull of the action set")
    return res.x[:n]


def decompose_and_sample(w, actions, rng):
    """Draw an action with E[a] = w from the action set's decomposition scheme."""
    w = np.asarray(w, dtype=float)
    if isinstance(actions, MSets):
        if abs(float(np.sum(w)) - actions.B) > 1e-9 or np.min(w) < -1e-9 or np.max(w) > 1 + 1e-9:
            raise RejectedInput("mean vector is outside the capped simplex beyond tolerance")
        w = np.clip(w, 0.0, 1.0)
        w = w * (actions.B / float(np.sum(w)))
        return systematic_sample(w, actions.B, rng)
    support = caratheodory_decompose(actions.vertices, w)
    probs = np.array([p for p, _ in support])
    js = np.array([j for _, j in support])
    pick = js[rng.choice(len(js), p=probs / probs.sum())]
    return actions.vertices[pick].astype(np.int64)


def decomposition_support(w, actions):
    """Exact [(prob, action)] support used by the sampler at mean vector w."""
    if isinstance(actions, MSets):
        return systematic_support(np.asarray(w, dtype=float), actions.B)
    return [(p, actions.vertices[j].astype(np.int64)) for p, j in caratheodory_decompose(actions.vertices, np.asarray(w, dtype=float))]


def iw_estimate(a, observed, w):
    """Importance-weighted estimate: observed(i)/w(i) on played coordinates, else 0."""
    a = np.asarray(a)
    observed = np.asarray(observed, dtype=float)
    w = np.asarray(w, dtype=float)
    est = np.zeros_like(w)
    sel = a > 0
    if np.any(w[sel] < 1e-300):
        raise NumericalError("mean-vector coordinate too small for importance weighting")
    est[sel] = observed[sel] / w[sel]
    return est


@dataclass
class SemiBanditParams:
    eta: float
    gamma: float
    B: int
    K: int
    T: int
    D: int
    d_max: int


def tune_semibandit(B, K, T, D, d_max):
    """Learning rates prescribed for the semi-bandit regret guarantee."""
    if not 1 <= B <= K or T < 1 or d_max < 1 or D < 0:
        raise RejectedInput("need 1 <= B <= K, T >= 1, d_max >= 1, D >= 0")
    gamma = 1.0 / (64.0**2 * B * (1.0 + d_max) ** 2)
    eta = min(
        1.0 / (16.0**2 * B * d_max**2),
        np.sqrt(B * (1.0 + np.log(K / B)) / (16.0 * (K * T + B * D))),
    )
    return SemiBanditParams(eta=float(eta), gamma=float(gamma), B=int(B), K=int(K), T=int(T), D=int(D), d_max=int(d_max))


def theorem_bound_comb(params):
    """Closed-form regret bound value for the tuned semi-bandit learner."""
    B, K, T, D, d = params.B, params.K, params.T, params.D, params.d_max
    log_ratio = np.log(K / B)
    return float(
        12.0 * np.sqrt(B * (K * T + B * D) * log_ratio)
        + 64.0**2 * B * (1.0 + d) ** 2 * K * np.log(T)
        + 2.0**9 * B**2 * d**2 * log_ratio
    )


def best_in_hindsight_comb(cum_loss, actions):
    """Best fixed action for the summed losses; ties break to the lowest index."""
    cum_loss = np.asarray(cum_loss, dtype=float)
    if isinstance(actions, MSets):
        order = np.argsort(cum_loss, kind="stable")
        a = np.zeros(actions.K, dtype=np.int64)
        a[order[: actions.B]] = 1
        return a
    vals = actions.vertices @ cum_loss
    return actions.vertices[int(np.argmin(vals))].astype(np.int64)


class SemiBanditLearner:
    """Stateful Algorithm runner for one replication.

    ``step(t, arrivals)`` applies the newly arrived feedback (pairs of
    emission round and observed ``a * loss`` vector), solves the FTRL step,
    and samples the round's action.  Estimates always use the mean vector
    recorded at emission time.
    """

    def __init__(self, actions, params, rng, tol=1e-9, strict=True):
        self.actions = actions
        self.params = params
        self.rng = rng
        self.tol = tol
        self.strict = strict
        self.domain = actions.domain()
        self.reg = EntropyLogBarrier(params.eta, params.gamma, self.domain.reg_dim)
        self.L_hat = np.zeros(actions.K)
        self.iterate = None
        self.records = {}
        self._active = getattr(self.domain, "active", None)
        window = params.d_max + 1
        self._recent = []  # (w_active, hess_diag) for the last d_max+1 rounds
        self._window = window
        self.w_t = None
        self.diagnostics = {
            "max_est_norm_ratio": 0.0,
            "max_dikin_ratio": 0.0,
            "max_loss_norm_ratio": 0.0,
            "rounds": 0,
        }

    def _to_active(self, v):
        return v if self._active is None else v[self._active]

    def _est_norm(self, est, hess_diag):
        e = self._to_active(est)
        return float(np.sqrt(np.sum(e * e / hess_diag)))

    def step(self, t, arrivals):
        budget = 1.0 / (64.0 * (1.0 + self.params.d_max))
        for tau, observed in arrivals:
            w_tau, a_tau, hd_tau = self.records.pop(tau)
            est = iw_estimate(a_tau, observed, w_tau)
            ratio = self._est_norm(est, hd_tau) / budget
            self.diagnostics["max_est_norm_ratio"] = max(self.diagnostics["max_est_norm_ratio"], ratio)
            if self.strict and ratio > 1.0 + 1e-9:
                raise InvariantViolation(f"estimate local norm exceeded its budget at round {tau}: ratio {ratio:.4f}")
            self.L_hat += est
        self.iterate = solve_ftrl(self.L_hat, self.reg, self.domain, warm_start=self.iterate, tol=self.tol)
        w = self.iterate.w
        w_act = self._to_active(w)
        hd = self.reg.hess_diag(w_act)
        for w_prev, hd_prev in self._recent:
            dw = w_act - w_prev
            ratio = 2.0 * float(np.sqrt(np.sum(hd_prev * dw * dw)))
            self.diagnostics["max_dikin_ratio"] = max(self.diagnostics["max_dikin_ratio"], ratio)
            if self.strict and ratio > 1.0 + 1e-9:
                raise InvariantViolation(f"iterate left the half-radius Dikin ellipsoid at round {t}")
        self._recent.append((w_act, hd))
        if len(self._recent) > self._window:
            self._recent.pop(0)
        a = decompose_and_sample(w, self.actions, self.rng)
        self.records[t] = (w, a, hd)
        self.w_t = w
        self.diagnostics["rounds"] += 1
        return a

    def note_true_loss(self, loss):
        """Record the diagnostic ratio of the true loss's local norm to sqrt(eta*B)."""
        if self.w_t is None:
            return
        hd = self.reg.hess_diag(self._to_active(self.w_t))
        le = self._to_active(np.asarray(loss, dtype=float))
        norm = float(np.sqrt(np.sum(le * le / hd)))
        bound = float(np.sqrt(self.params.eta * self.actions.max_l1()))
        self.diagnostics["max_loss_norm_ratio"] = max(self.diagnostics["max_loss_norm_ratio"], norm / bound)
