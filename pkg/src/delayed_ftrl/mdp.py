"""Delayed FTRL over occupancy measures for adversarial MDPs with known transitions.

The learner optimizes over the occupancy polytope (transition ratio band
around the known transitions plus a coordinate floor), extracts a policy from
the iterate, plays one episode, and deflates importance weights by an upper
occupancy bound computed over the transition confidence band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import OccupancyPolytope
from .errors import InvariantViolation, NumericalError, RejectedInput
from .regularizers import EntropyLogBarrier
from .solver import solve_ftrl


@dataclass
class MdpSpec:
    """Finite-horizon MDP with layered transition tensor p[h, s, a, s']."""

    H: int
    S: int
    A: int
    p: np.ndarray
    s_init: int = 0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (self.H, self.S, self.A, self.S):
            raise RejectedInput(f"transition tensor must have shape {(self.H, self.S, self.A, self.S)}")
        if np.max(np.abs(self.p.sum(axis=3) - 1.0)) > 1e-12:
            raise RejectedInput("transition rows must sum to 1 within 1e-12")
        if np.any(self.p < 0):
            raise RejectedInput("transition probabilities must be nonnegative")
        if not 0 <= self.s_init < self.S:
            raise RejectedInput("initial state out of range")


def random_mdp(H, S, A, seed, concentration=1.0):
    """Dirichlet-random layered transitions; deterministic given the seed."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), H, S, A)))
    p = rng.dirichlet(np.full(S, concentration), size=(H, S, A))
    return MdpSpec(H=H, S=S, A=A, p=p)


def occupancy_from_policy(policy, p, s_init):
    """Forward recursion: w[h,s,a,s'] = P(visit s at h, take a, land in s')."""
    policy = np.asarray(policy, dtype=float)
    p = np.asarray(p, dtype=float)
    H, S, A, _ = p.shape
    w = np.zeros((H, S, A, S))
    x = np.zeros(S)
    x[s_init] = 1.0
    for h in range(H):
        w[h] = x[:, None, None] * policy[h][:, :, None] * p[h]
        x = w[h].sum(axis=(0, 1))
    return w


def policy_from_occupancy(w, s_init):
    """pi[h,s,a] = w_h(s,a)/w_h(s); unreachable (h=1, s != s_init) rows are uniform."""
    w = np.asarray(w, dtype=float)
    H, S, A, _ = w.shape
    policy = np.full((H, S, A), 1.0 / A)
    sa = w.sum(axis=3)
    s_mass = sa.sum(axis=2)
    for h in range(H):
        for s in range(S):
            if h == 0 and s != s_init:
                continue  # structurally zero mass; any row works, keep uniform
            if s_mass[h, s] <= 0:
                raise RejectedInput(f"zero state-visitation mass at layer {h}, state {s}")
            policy[h, s] = sa[h, s] / s_mass[h, s]
    return policy


def induced_transitions(w, p_fallback):
    """p_hat[h,s,a,s'] = w_h(s,a,s')/w_h(s,a), falling back where w_h(s,a) = 0."""
    w = np.asarray(w, dtype=float)
    sa = w.sum(axis=3)
    p_hat = p_fallback.copy()
    mask = sa > 0
    p_hat[mask] = w[mask] / sa[mask][:, None]
    return p_hat


def build_mdp_domain(spec, T):
    """Occupancy polytope with ratio band 1/(T*H*S*A) and floor 1/(T^3 H^2 S^4 A^2)."""
    return OccupancyPolytope(spec.H, spec.S, spec.A, spec.p, T, spec.s_init)


def _row_max(prow, g, eps):
    """Maximize sum_j phat_j g_j over the simplex rows within eps of prow (inf norm)."""
    S = prow.shape[0]
    phat = prow.copy()
    order = np.argsort(-g, kind="stable")
    i, j = 0, S - 1
    while i < j:
        hi, lo = order[i], order[j]
        if g[hi] <= g[lo]:
            break
        raise_cap = min(eps - (phat[hi] - prow[hi]), 1.0 - phat[hi])
        if raise_cap <= 1e-18:
            i += 1
            continue
        lower_cap = min(eps - (prow[lo] - phat[lo]), phat[lo])
        if lower_cap <= 1e-18:
            j -= 1
            continue
        delta = min(raise_cap, lower_cap)
        phat[hi] += delta
        phat[lo] -= delta
    return float(phat @ g)


def upper_occupancy(policy, spec, eps):
    """u[h,s,a] = max over transitions in the eps band of the visitation
    probability of (s,a) at layer h under the fixed policy.

    Each target (h, s) is an exact Bellman maximization over per-row
    transition choices; u factorizes over actions as u_h(s) * pi_h(a|s).
    """
    policy = np.asarray(policy, dtype=float)
    H, S, A = spec.H, spec.S, spec.A
    u_s = np.zeros((H, S))
    u_s[0, spec.s_init] = 1.0
    for h_star in range(1, H):
        for s_star in range(S):
            g = np.zeros(S)
            g[s_star] = 1.0
            for h in range(h_star - 1, -1, -1):
                gn = np.zeros(S)
                for s in range(S):
                    acc = 0.0
                    for a in range(A):
                        acc += policy[h, s, a] * _row_max(spec.p[h, s, a], g, eps)
                    gn[s] = acc
                g = gn
            u_s[h_star, s_star] = g[spec.s_init]
    return u_s[:, :, None] * policy


def mdp_estimate(traj, u):
    """Deflated importance estimate: loss/u on the visited (h,s,a), zero elsewhere."""
    u = np.asarray(u, dtype=float)
    H, S, A = u.shape
    est = np.zeros((H, S, A))
    for h, (s, a, loss) in enumerate(traj):
        if u[h, s, a] <= 0:
            raise NumericalError(f"nonpositive upper occupancy at visited entry {(h, s, a)}")
        est[h, s, a] = loss / u[h, s, a]
    return est


def estimate_expectation(policy, spec, losses, u):
    """Exact E[estimate] = (w^pi / u) * loss entry-wise; used by bias checks."""
    w_sa = occupancy_from_policy(policy, spec.p, spec.s_init).sum(axis=3)
    out = np.zeros_like(w_sa)
    mask = w_sa > 0
    out[mask] = w_sa[mask] / np.asarray(u, dtype=float)[mask] * np.asarray(losses, dtype=float)[mask]
    return out


def rollout(policy, spec, losses, rng):
    """Simulate one episode; returns [(s_h, a_h, loss_h)] for h = 1..H."""
    policy = np.asarray(policy, dtype=float)
    losses = np.asarray(losses, dtype=float)
    s = spec.s_init
    traj = []
    for h in range(spec.H):
        a = int(rng.choice(spec.A, p=policy[h, s]))
        traj.append((s, a, float(losses[h, s, a])))
        s = int(rng.choice(spec.S, p=spec.p[h, s, a]))
    return traj


@dataclass
class MdpParams:
    eta: float
    gamma: float
    H: int
    S: int
    A: int
    T: int
    D: int
    d_max: int


def tune_mdp(H, S, A, T, D, d_max):
    """Learning rates prescribed for the adversarial-MDP regret guarantee."""
    if min(H, S, A, T) < 1 or d_max < 1 or D < 0:
        raise RejectedInput("need H,S,A,T >= 1, d_max >= 1, D >= 0")
    gamma = 1.0 / (4096.0 * H * (1.0 + d_max) ** 2)
    log_term = np.log(H * S * A * T)
    branch2 = 1.0 / np.sqrt((S * A * T + D) * log_term) if log_term > 0 else np.inf
    eta = min(1.0 / (256.0 * H * (1.0 + d_max) ** 2), branch2)
    return MdpParams(eta=float(eta), gamma=float(gamma), H=H, S=S, A=A, T=T, D=int(D), d_max=int(d_max))


def theorem_bound_mdp(params):
    H, S, A, T, D, d = params.H, params.S, params.A, params.T, params.D, params.d_max
    log_term = np.log(H * S * A * T)
    return float(
        10.0 * H * np.sqrt(S * A * T * log_term)
        + 10.0 * H * np.sqrt(D * log_term)
        + 7.0e5 * H**2 * S**2 * A * (1.0 + d) ** 2
    )


def best_in_hindsight_mdp(cum_loss, spec):
    """Exact backward induction on the summed cost tensor.

    Returns the deterministic optimal policy as an (H, S) action index array
    together with its value from the initial state.  Ties break to the lowest
    action index.
    """
    cum_loss = np.asarray(cum_loss, dtype=float)
    V = np.zeros(spec.S)
    pol = np.zeros((spec.H, spec.S), dtype=np.int64)
    for h in range(spec.H - 1, -1, -1):
        Q = cum_loss[h] + spec.p[h] @ V
        pol[h] = np.argmin(Q, axis=1)
        V = Q[np.arange(spec.S), pol[h]]
    return pol, float(V[spec.s_init])


def deterministic_policy_matrix(pol, A):
    """Expand an (H, S) action index array into stochastic policy matrices."""
    pol = np.asarray(pol, dtype=np.int64)
    H, S = pol.shape
    mat = np.zeros((H, S, A))
    for h in range(H):
        mat[h, np.arange(S), pol[h]] = 1.0
    return mat


class MdpLearner:
    """Stateful episodic learner for one replication.

    ``step(t, arrivals)`` applies newly arrived trajectory feedback (pairs of
    emission episode and [(s,a,loss)] trajectory), solves the FTRL step over
    the occupancy polytope, and returns the policy to play this episode.
    """

    def __init__(self, spec, params, rng, T=None, tol=1e-9, strict=True):
        self.spec = spec
        self.params = params
        self.rng = rng
        self.tol = tol
        self.strict = strict
        self.domain = build_mdp_domain(spec, params.T if T is None else T)
        self.reg = EntropyLogBarrier(params.eta, params.gamma, self.domain.n_vars)
        self.L_x = np.zeros(self.domain.n_vars)
        self.iterate = None
        self.records = {}
        self._recent = []
        self._window = params.d_max + 1
        self.policy_t = None
        self.true_occupancy_sa = None
        self.diagnostics = {
            "max_est_norm_ratio": 0.0,
            "max_dikin_ratio": 0.0,
            "max_loss_norm_ratio": 0.0,
            "max_eq_residual": 0.0,
            "min_floor_slack": np.inf,
            "min_band_slack": np.inf,
            "max_value_diff_ratio": 0.0,
            "max_u_shortfall": 0.0,
            "max_u_gap_ratio": 0.0,
            "rounds": 0,
        }

    def _embedded_norm_sq(self, tensor_sa, hd):
        total = 0.0
        for h in range(self.spec.H):
            for s in range(self.spec.S):
                if h == 0 and s != self.spec.s_init:
                    continue
                for a in range(self.spec.A):
                    v = tensor_sa[h, s, a]
                    if v != 0.0:
                        cols = self.domain.index[h, s, a, :]
                        total += v * v * float(np.sum(1.0 / hd[cols]))
        return total

    def step(self, t, arrivals):
        budget = 1.0 / (64.0 * (1.0 + self.params.d_max))
        for tau, traj in arrivals:
            u_tau, hd_tau = self.records.pop(tau)
            est = mdp_estimate(traj, u_tau)
            ratio = float(np.sqrt(self._embedded_norm_sq(est, hd_tau))) / budget
            self.diagnostics["max_est_norm_ratio"] = max(self.diagnostics["max_est_norm_ratio"], ratio)
            if self.strict and ratio > 1.0 + 1e-9:
                raise InvariantViolation(f"estimate local norm exceeded its budget at episode {tau}")
            for h, (s, a, _loss) in enumerate(traj):
                if est[h, s, a] != 0.0:
                    self.L_x[self.domain.index[h, s, a, :]] += est[h, s, a]
        self.iterate = solve_ftrl(self.L_x, self.reg, self.domain, warm_start=self.iterate, tol=self.tol)
        x = self.iterate.x
        w = self.iterate.w

        report = self.domain.membership_report(x)
        self.diagnostics["max_eq_residual"] = max(self.diagnostics["max_eq_residual"], report["eq_residual"])
        self.diagnostics["min_floor_slack"] = min(self.diagnostics["min_floor_slack"], report["floor_slack_min"])
        self.diagnostics["min_band_slack"] = min(self.diagnostics["min_band_slack"], report["band_slack_min"])
        if self.strict and not self.domain.contains(x, tol=1e-8):
            raise InvariantViolation(f"FTRL iterate left the occupancy polytope at episode {t}")

        hd = self.reg.hess_diag(x)
        for x_prev, hd_prev in self._recent:
            dx = x - x_prev
            ratio = 2.0 * float(np.sqrt(np.sum(hd_prev * dx * dx)))
            self.diagnostics["max_dikin_ratio"] = max(self.diagnostics["max_dikin_ratio"], ratio)
            if self.strict and ratio > 1.0 + 1e-9:
                raise InvariantViolation(f"iterate left the half-radius Dikin ellipsoid at episode {t}")
        self._recent.append((x, hd))
        if len(self._recent) > self._window:
            self._recent.pop(0)

        policy = policy_from_occupancy(w, self.spec.s_init)
        w_pi = occupancy_from_policy(policy, self.spec.p, self.spec.s_init)
        l1 = float(np.sum(np.abs(w_pi - w)))
        bound_l1 = 2.0 * self.spec.H / self.domain.T
        self.diagnostics["max_value_diff_ratio"] = max(self.diagnostics["max_value_diff_ratio"], l1 / bound_l1)
        if self.strict and l1 > bound_l1 + 1e-6:
            raise InvariantViolation(f"played occupancy drifted {l1:.2e} > 2H/T from the iterate at episode {t}")

        u = upper_occupancy(policy, self.spec, self.domain.eps)
        w_sa = w.sum(axis=3)
        w_pi_sa = w_pi.sum(axis=3)
        shortfall = float(np.max(np.maximum(w_sa, w_pi_sa) - u))
        self.diagnostics["max_u_shortfall"] = max(self.diagnostics["max_u_shortfall"], shortfall)
        if self.strict and shortfall > 1e-9:
            raise InvariantViolation(f"upper occupancy failed to dominate at episode {t}")
        gap = float(np.sum(np.abs(u - w_sa)))
        gap_bound = 4.0 * self.spec.H**2 * self.spec.S / self.domain.T
        self.diagnostics["max_u_gap_ratio"] = max(self.diagnostics["max_u_gap_ratio"], gap / gap_bound)
        if self.strict and gap > gap_bound + 1e-6:
            raise InvariantViolation(f"upper occupancy gap {gap:.2e} exceeded 4H^2S/T at episode {t}")

        self.records[t] = (u, hd)
        self.policy_t = policy
        self.true_occupancy_sa = w_pi_sa
        self.diagnostics["rounds"] += 1
        return policy

    def note_true_loss(self, losses):
        """Diagnostic: local norm of the true cost tensor against sqrt(eta*H)."""
        if self.iterate is None:
            return
        hd = self.reg.hess_diag(self.iterate.x)
        norm = float(np.sqrt(self._embedded_norm_sq(np.asarray(losses, dtype=float), hd)))
        bound = 1.0 / (16.0 * (1.0 + self.params.d_max))
        self.diagnostics["max_loss_norm_ratio"] = max(self.diagnostics["max_loss_norm_ratio"], norm / bound)
