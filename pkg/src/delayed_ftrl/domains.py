"""Decision domains for the FTRL solver.

Each domain describes one feasible set: its solver coordinates, equality
constraints, the inequality constraints that are not already covered by the
regularizer's own barrier (these receive a small auxiliary log penalty inside
the solver), and a strictly feasible starting point.
"""

from __future__ import annotations

import numpy as np

from .errors import RejectedInput


class CappedSimplexHull:
    """{w in [0,1]^K : sum(w) = B}, the convex hull of B-subset indicator vectors."""

    kind = "capped_simplex"

    def __init__(self, K, B):
        K = int(K)
        if K < 1:
            raise RejectedInput("K must be at least 1")
        if not (1 <= B <= K):
            raise RejectedInput(f"budget B={B} must satisfy 1 <= B <= K={K}")
        self.K = K
        self.B = float(B)
        self.n_vars = K
        self.reg_dim = K

    def fixed_point(self):
        # B == K collapses the domain to the single point of all ones.
        if self.B == self.K:
            return np.ones(self.K)
        return None

    def initial_point(self):
        return np.full(self.K, self.B / self.K)

    def to_w(self, x):
        return x

    def contains(self, w, tol=1e-9):
        w = np.asarray(w, dtype=float)
        return (
            w.shape == (self.K,)
            and abs(float(np.sum(w)) - self.B) <= tol
            and bool(np.all(w >= -tol))
            and bool(np.all(w <= 1 + tol))
        )


class VertexHull:
    """Convex hull of an explicit list of binary vertices; solved over mixture weights."""

    kind = "vertex_hull"

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[0] == 0:
            raise RejectedInput("vertex list must be a nonempty (n_vertices, K) array")
        if not np.all((V == 0) | (V == 1)):
            raise RejectedInput("vertices must be binary vectors")
        self.vertices = V
        self.n_vertices, self.K = V.shape
        self.active = np.any(V > 0, axis=0)
        # Coordinates never covered by a vertex are identically zero on the hull
        # and are excluded from the regularizer.
        self.jac = V[:, self.active].T  # maps mixture weights q to active w coords
        self.reg_dim = int(np.sum(self.active))
        self.n_vars = self.n_vertices

    def fixed_point(self):
        if self.n_vertices == 1:
            return self.vertices[0].copy()
        return None

    def initial_point(self):
        return np.full(self.n_vertices, 1.0 / self.n_vertices)

    def to_w(self, q):
        return self.vertices.T @ q

    def lift_loss(self, L):
        return self.vertices @ np.asarray(L, dtype=float)

    def contains(self, w, tol=1e-7):
        from scipy.optimize import linprog

        w = np.asarray(w, dtype=float)
        if w.shape != (self.K,):
            return False
        n = self.n_vertices
        # min sum of slacks s.t. V'q + s+ - s- = w, sum q = 1, all vars >= 0
        c = np.concatenate([np.zeros(n), np.ones(2 * self.K)])
        A_eq = np.zeros((self.K + 1, n + 2 * self.K))
        A_eq[: self.K, :n] = self.vertices.T
        A_eq[: self.K, n : n + self.K] = np.eye(self.K)
        A_eq[: self.K, n + self.K :] = -np.eye(self.K)
        A_eq[self.K, :n] = 1.0
        b_eq = np.concatenate([w, [1.0]])
        res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        return bool(res.success) and res.fun <= tol


class BallDomain:
    """L2 ball of radius B; feasibility is enforced entirely by the barrier in R."""

    kind = "ball"

    def __init__(self, K, B):
        if K < 1 or B <= 0:
            raise RejectedInput("need K >= 1 and B > 0")
        self.K = int(K)
        self.B = float(B)
        self.n_vars = self.K
        self.reg_dim = self.K

    def fixed_point(self):
        return None

    def initial_point(self):
        return np.zeros(self.K)

    def to_w(self, x):
        return x

    def contains(self, w, tol=1e-9):
        return float(np.linalg.norm(w)) <= self.B + tol


class PolytopeDomain:
    """{w : Gw <= h}; feasibility is enforced by the log barrier in R."""

    kind = "polytope"

    def __init__(self, G, h):
        self.G = np.asarray(G, dtype=float)
        self.h = np.asarray(h, dtype=float)
        if self.G.ndim != 2 or self.h.shape != (self.G.shape[0],):
            raise RejectedInput("polytope needs G (m,K) and h (m,)")
        self.K = self.G.shape[1]
        self.n_vars = self.K
        self.reg_dim = self.K
        self._center = None

    def fixed_point(self):
        return None

    def initial_point(self):
        if self._center is None:
            from scipy.optimize import linprog

            m, K = self.G.shape
            norms = np.linalg.norm(self.G, axis=1)
            c = np.zeros(K + 1)
            c[-1] = -1.0
            A_ub = np.hstack([self.G, norms[:, None]])
            res = linprog(c, A_ub=A_ub, b_ub=self.h, bounds=[(None, None)] * K + [(0, None)], method="highs")
            if not res.success or res.x[-1] <= 0:
                raise RejectedInput("polytope has empty interior")
            self._center = res.x[:K]
        return self._center.copy()

    def to_w(self, x):
        return x

    def contains(self, w, tol=1e-9):
        return bool(np.all(self.G @ np.asarray(w, dtype=float) <= self.h + tol))


def _occupancy_tensor(policy, p, s_init):
    """Forward recursion for the (H,S,A,S) occupancy of a layered policy."""
    H, S, A, _ = p.shape
    w = np.zeros((H, S, A, S))
    x = np.zeros(S)
    x[s_init] = 1.0
    for h in range(H):
        w[h] = x[:, None, None] * policy[h][:, :, None] * p[h]
        x = w[h].sum(axis=(0, 1))
    return w


class OccupancyPolytope:
    """Occupancy measures of an episodic MDP, restricted to a transition
    confidence band of half-width eps and a coordinate floor.

    Solver coordinates are the "active" entries of the (H,S,A,S) tensor:
    layer 1 keeps only the initial state's block (other layer-1 states carry
    no mass under any policy or admissible transition), later layers keep all
    entries.  Equalities are the initial mass and per-state flow conservation;
    the ratio band and the floor are penalty inequalities.
    """

    kind = "occupancy"

    def __init__(self, horizon, S, A, p, T, s_init=0):
        p = np.asarray(p, dtype=float)
        if p.shape != (horizon, S, A, S):
            raise RejectedInput(f"transition tensor must have shape {(horizon, S, A, S)}")
        row_sums = p.sum(axis=3)
        if np.max(np.abs(row_sums - 1.0)) > 1e-12:
            raise RejectedInput("transition rows must sum to 1 within 1e-12")
        if np.any(p < 0):
            raise RejectedInput("transition probabilities must be nonnegative")
        self.H = int(horizon)
        self.S = int(S)
        self.A = int(A)
        self.p = p
        self.T = int(T)
        self.s_init = int(s_init)
        self.eps = 1.0 / (T * horizon * S * A)
        self.floor = 1.0 / (T**3 * horizon**2 * S**4 * A**2)

        idx = -np.ones((horizon, S, A, S), dtype=np.int64)
        pos = 0
        blocks = []
        block_keys = []
        for h in range(horizon):
            states = [self.s_init] if h == 0 else range(S)
            for s in states:
                for a in range(A):
                    cols = np.arange(pos, pos + S)
                    idx[h, s, a, :] = cols
                    pos += S
                    blocks.append(cols)
                    block_keys.append((h, s, a))
        self.index = idx
        self.n_vars = pos
        self.reg_dim = pos
        self.blocks = blocks
        self.block_keys = block_keys

        # Equality rows: initial mass, then flow conservation per (h>=2, state).
        m = 1 + (horizon - 1) * S
        A_eq = np.zeros((m, pos))
        b_eq = np.zeros(m)
        A_eq[0, idx[0, self.s_init].ravel()] = 1.0
        b_eq[0] = 1.0
        r = 1
        for h in range(1, horizon):
            for s in range(S):
                A_eq[r, idx[h, s].ravel()] = 1.0
                prev = idx[h - 1, :, :, s].ravel()
                prev = prev[prev >= 0]
                A_eq[r, prev] -= 1.0
                r += 1
        self.eq_A = A_eq
        self.eq_b = b_eq

        # Ratio-band penalty rows, grouped per (h,s,a) block.  Row coefficients
        # are over the block's S columns; the constraint is coefs . x <= 0.
        self.block_rows = []
        for cols, (h, s, a) in zip(blocks, block_keys):
            rows = []
            prow = p[h, s, a]
            for sp in range(S):
                up = -(prow[sp] + self.eps) * np.ones(S)
                up[sp] += 1.0
                rows.append(up)
                lo_coef = prow[sp] - self.eps
                if lo_coef > 0:
                    lo = lo_coef * np.ones(S)
                    lo[sp] -= 1.0
                    rows.append(lo)
            self.block_rows.append(np.array(rows))

    def fixed_point(self):
        return None

    def smoothed_transitions(self):
        kappa = 1.0 / (self.T * self.H * self.S * self.A)
        return (1.0 - kappa) * self.p + kappa / self.S

    def initial_point(self):
        """Strictly feasible witness: mix the uniform policy's occupancy under
        the true transitions with its occupancy under smoothed transitions."""
        pi_u = np.full((self.H, self.S, self.A), 1.0 / self.A)
        w_true = _occupancy_tensor(pi_u, self.p, self.s_init)
        w_sm = _occupancy_tensor(pi_u, self.smoothed_transitions(), self.s_init)
        w = (1.0 - 1.0 / self.T) * w_true + (1.0 / self.T) * w_sm
        x = self.from_tensor(w)
        report = self.membership_report(x)
        if report["floor_slack_min"] <= 0 or report["band_slack_min"] <= 0:
            raise RejectedInput("witness construction failed to produce a strictly interior point")
        return x

    def from_tensor(self, w):
        x = np.zeros(self.n_vars)
        mask = self.index >= 0
        x[self.index[mask]] = np.asarray(w, dtype=float)[mask]
        return x

    def to_w(self, x):
        w = np.zeros((self.H, self.S, self.A, self.S))
        mask = self.index >= 0
        w[mask] = x[self.index[mask]]
        return w

    def sa_marginals(self, x):
        return self.to_w(x).sum(axis=3)

    def membership_report(self, x, ):
        """Violation summary used by feasibility assertions and tests."""
        eq_res = float(np.max(np.abs(self.eq_A @ x - self.eq_b))) if self.n_vars else 0.0
        floor_slack = float(np.min(x - self.floor))
        band_slack = np.inf
        for cols, rows in zip(self.blocks, self.block_rows):
            vals = rows @ x[cols]
            band_slack = min(band_slack, float(np.min(-vals)))
        return {
            "eq_residual": eq_res,
            "floor_slack_min": floor_slack,
            "band_slack_min": band_slack,
        }

    def contains(self, x, tol=1e-8):
        rep = self.membership_report(x)
        return (
            rep["eq_residual"] <= tol
            and rep["floor_slack_min"] >= -tol
            and rep["band_slack_min"] >= -tol
        )
