"""Constrained FTRL step: minimize L.w + R(w) over a domain.

One damped-Newton scheme, three linear-algebra realizations:

* capped simplex + entropy/log-barrier: scalar kernel (see ``_kernels``),
* occupancy polytope: block-structured KKT solve (Hessian is block diagonal
  over transition rows),
* everything else (vertex hulls, balls, polytopes): dense KKT solve.

Inequalities not covered by the regularizer's own barrier carry an auxiliary
logarithmic penalty with a weight small enough not to move the iterate beyond
solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .domains import BallDomain, CappedSimplexHull, OccupancyPolytope, PolytopeDomain, VertexHull
from .errors import ConvergenceError, RejectedInput
from .regularizers import EntropyLogBarrier, QuadraticPlusBarrier

PENALTY_WEIGHT = 1e-8
ARMIJO_C = 0.25
ARMIJO_SHRINK = 0.5
BOUNDARY_FRACTION = 0.99


@dataclass
class Iterate:
    """Solution of one FTRL step plus its solver certificate."""

    w: np.ndarray
    kkt_residual: float
    feasibility_slack: float
    x: np.ndarray | None = None
    iterations: int = 0
    meta: dict = field(default_factory=dict)


def solve_ftrl(L, reg, dom, warm_start=None, tol=1e-9, max_iter=200):
    """Solve argmin_{w in dom} L.w + R(w) to the requested KKT tolerance.

    Deterministic given identical inputs.  Raises ``ConvergenceError`` (with
    the best iterate attached) if the Newton budget is exhausted, and
    ``RejectedInput`` for infeasible domains or bad arguments.
    """
    if tol <= 0:
        raise RejectedInput("tol must be positive")
    L = np.asarray(L, dtype=float)

    fp = dom.fixed_point()
    if fp is not None:
        return Iterate(w=fp, kkt_residual=0.0, feasibility_slack=0.0, x=fp, iterations=0)

    x0 = None
    if warm_start is not None and warm_start.x is not None and warm_start.x.shape == (dom.n_vars,):
        x0 = warm_start.x.copy()

    if isinstance(dom, CappedSimplexHull) and isinstance(reg, EntropyLogBarrier):
        return _solve_capped_simplex(L, reg, dom, x0, tol, max_iter)
    if isinstance(dom, OccupancyPolytope) and isinstance(reg, EntropyLogBarrier):
        warm_duals = warm_start.meta.get("ipm_duals") if warm_start is not None else None
        return _solve_occupancy(L, reg, dom, x0, tol, max_iter, warm_duals=warm_duals)
    if isinstance(dom, VertexHull) and isinstance(reg, EntropyLogBarrier):
        return _solve_vertex_hull(L, reg, dom, x0, tol, max_iter)
    if isinstance(dom, (BallDomain, PolytopeDomain)) and isinstance(reg, QuadraticPlusBarrier):
        return _solve_smooth(L, reg, dom, x0, tol, max_iter)
    raise RejectedInput(f"unsupported domain/regularizer pair: {type(dom).__name__}/{type(reg).__name__}")


def _solve_capped_simplex(L, reg, dom, x0, tol, max_iter):
    if L.shape != (dom.K,):
        raise RejectedInput("loss vector dimension mismatch")
    w0 = x0 if x0 is not None else dom.initial_point()
    w, res, it, slack = _kernels.capped_simplex_newton(
        L, reg.eta, reg.gamma, PENALTY_WEIGHT, dom.B, w0, tol, int(max_iter)
    )
    iterate = Iterate(w=w, kkt_residual=float(res), feasibility_slack=float(slack), x=w, iterations=int(it))
    if res > tol:
        raise ConvergenceError(
            f"capped-simplex Newton stalled at residual {res:.3e} > tol {tol:.1e}",
            iterate=iterate,
            residual=float(res),
        )
    return iterate


def _solve_vertex_hull(L, reg, dom, x0, tol, max_iter):
    if L.shape != (dom.K,):
        raise RejectedInput("loss vector dimension mismatch")
    c = dom.lift_loss(L)
    J = dom.jac  # (reg_dim, n_vertices)
    n = dom.n_vars
    A = np.ones((1, n))
    b = np.ones(1)
    q = x0 if x0 is not None else dom.initial_point()
    mu = PENALTY_WEIGHT

    def f_val(q):
        if np.any(q <= 0):
            return np.inf
        return float(c @ q) + reg.value(J @ q) - mu * float(np.sum(np.log(q)))

    best = None
    for it in range(max_iter + 1):
        wr = J @ q
        g = c + J.T @ reg.grad(wr) - mu / q
        nu = -float(np.mean(g))
        res = float(np.max(np.abs(g + nu)))
        if best is None or res < best[1]:
            best = (q.copy(), res, it)
        if res <= tol:
            return _vertex_iterate(dom, q, res, it)
        if it == max_iter:
            break
        Hd = reg.hess_diag(wr)
        H = (J.T * Hd) @ J + np.diag(mu / (q * q))
        KKT = np.zeros((n + 1, n + 1))
        KKT[:n, :n] = H
        KKT[:n, n:] = A.T
        KKT[n:, :n] = A
        rhs = np.concatenate([-g, b - A @ q])
        sol = np.linalg.solve(KKT, rhs)
        dq = sol[:n]
        theta = 1.0
        neg = dq < 0
        if np.any(neg):
            theta = min(theta, BOUNDARY_FRACTION * float(np.min(q[neg] / -dq[neg])))
        f0 = f_val(q)
        gd = float(g @ dq)
        for _ in range(60):
            if f_val(q + theta * dq) <= f0 + ARMIJO_C * theta * gd:
                break
            theta *= ARMIJO_SHRINK
        q = q + theta * dq
    qb, res, it = best
    raise ConvergenceError(
        f"vertex-hull Newton stalled at residual {res:.3e} > tol {tol:.1e}",
        iterate=_vertex_iterate(dom, qb, res, it),
        residual=res,
    )


def _vertex_iterate(dom, q, res, it):
    return Iterate(
        w=dom.to_w(q),
        kkt_residual=res,
        feasibility_slack=float(np.min(q)),
        x=q,
        iterations=it,
    )


def _solve_smooth(L, reg, dom, x0, tol, max_iter):
    """Unconstrained Newton; the barrier inside R keeps iterates interior."""
    if L.shape != (dom.n_vars,):
        raise RejectedInput("loss vector dimension mismatch")
    w = x0 if x0 is not None else dom.initial_point()

    def f_val(w):
        try:
            return float(L @ w) + reg.value(w)
        except RejectedInput:
            return np.inf

    best = None
    for it in range(max_iter + 1):
        g = L + reg.grad(w)
        res = float(np.max(np.abs(g)))
        if best is None or res < best[1]:
            best = (w.copy(), res, it)
        if res <= tol:
            return _smooth_iterate(dom, w, res, it)
        if it == max_iter:
            break
        H = reg.hess(w)
        dw = np.linalg.solve(H, -g)
        theta = min(1.0, BOUNDARY_FRACTION * reg.max_step(w, dw))
        f0 = f_val(w)
        gd = float(g @ dw)
        for _ in range(60):
            if f_val(w + theta * dw) <= f0 + ARMIJO_C * theta * gd:
                break
            theta *= ARMIJO_SHRINK
        w = w + theta * dw
    wb, res, it = best
    raise ConvergenceError(
        f"Newton stalled at residual {res:.3e} > tol {tol:.1e}",
        iterate=_smooth_iterate(dom, wb, res, it),
        residual=res,
    )


def _smooth_iterate(dom, w, res, it):
    if isinstance(dom, BallDomain):
        slack = dom.B - float(np.linalg.norm(w))
    else:
        slack = float(np.min(dom.h - dom.G @ w))
    return Iterate(w=w, kkt_residual=res, feasibility_slack=slack, x=w, iterations=it)


def _solve_occupancy(L_x, reg, dom, x0, tol, max_iter, warm_duals=None):
    """Two-phase solve over active occupancy coordinates.

    The regularizer pulls transition ratios toward uniform, so the FTRL
    optimum generically pins ratio-band rows; a pure barrier or penalty on
    those rows collapses their slacks to ~1e-15 and poisons the KKT
    conditioning.  Phase 1 (cold starts only) runs a loose barrier
    continuation to identify the pinned rows; phase 2 treats them as exact
    equalities and runs a well-conditioned damped Newton with multiplier sign
    checks, promoting or demoting rows until the active set is consistent.
    Band rows may therefore be exactly active at the optimum; the returned
    ``feasibility_slack`` reports the worst slack (0 up to float error on
    active rows).

    ``L_x`` is in solver coordinates (one entry per active (h,s,a,s')).
    """
    if L_x.shape != (dom.n_vars,):
        raise RejectedInput("loss vector dimension mismatch")
    warm_active = warm_duals
    if x0 is not None and warm_active is not None:
        x = x0
        active = [a.copy() for a in warm_active]
    else:
        x = x0 if x0 is not None else dom.initial_point()
        x = _occ_phase1(L_x, reg, dom, x)
        active = _occ_identify(dom, x)
    active = [
        _independent_rows(rows, act) for rows, act in zip(dom.block_rows, active)
    ]
    total_iters = 0
    for _pass in range(12):
        x, lambdas, dec, r_inf, iters = _occ_active_newton(L_x, reg, dom, x, active, tol, max_iter)
        total_iters += iters
        changed = False
        for b, (cols, rows, act, lam) in enumerate(zip(dom.blocks, dom.block_rows, active, lambdas)):
            if act.size:
                lam_scale = max(1.0, float(np.max(np.abs(lam))))
                act = act[lam > -1e-9 * lam_scale]
            slack = -(rows @ x[cols])
            m_b = float(np.sum(x[cols]))
            tight = np.where(slack <= 1e-9 * m_b)[0]
            cand = np.concatenate([act, np.setdiff1d(tight, act)])
            new_act = _independent_rows(rows, cand)
            if not np.array_equal(new_act, active[b]):
                changed = True
            active[b] = new_act
        if not changed:
            res = max(dec, r_inf)
            state = _occ_slacks(dom, x)
            return Iterate(
                w=dom.to_w(x),
                kkt_residual=res,
                feasibility_slack=state,
                x=x,
                iterations=total_iters,
                meta={"ipm_duals": [a.copy() for a in active]},
            )
    raise ConvergenceError(
        "occupancy active-set loop failed to settle",
        iterate=Iterate(w=dom.to_w(x), kkt_residual=np.inf, feasibility_slack=_occ_slacks(dom, x), x=x),
        residual=np.inf,
    )


def _independent_rows(rows, candidates):
    """Greedy independent subset of band rows, preserving candidate order.

    Band rows can coincide as hyperplanes (for S=2 the upper band on one
    successor equals the lower band on the other), so active sets must be
    rank-reduced before entering the equality KKT block.
    """
    kept = []
    basis = []
    for r in candidates:
        v = rows[r].astype(float).copy()
        nrm0 = float(np.linalg.norm(v))
        for q in basis:
            v -= (q @ v) * q
        nrm = float(np.linalg.norm(v))
        if nrm > 1e-9 * max(nrm0, 1.0):
            basis.append(v / nrm)
            kept.append(int(r))
    return np.array(sorted(kept), dtype=np.int64)


def _occ_slacks(dom, x):
    worst = float(np.min(x - dom.floor))
    for cols, rows in zip(dom.blocks, dom.block_rows):
        worst = min(worst, float(np.min(-(rows @ x[cols]))))
    return worst


def _occ_phase1(L_x, reg, dom, x):
    """Loose barrier continuation; only needs to identify the pinned rows."""
    A = dom.eq_A
    b = dom.eq_b
    m = A.shape[0]
    n = dom.n_vars
    floor = dom.floor

    def slacks_of(x):
        sf = x - floor
        if np.any(sf <= 0):
            return None
        sb = []
        for cols, rows in zip(dom.blocks, dom.block_rows):
            sl = -(rows @ x[cols])
            if np.any(sl <= 0):
                return None
            sb.append(sl)
        return sf, sb

    def f_val(x, mu, state=None):
        state = state if state is not None else slacks_of(x)
        if state is None:
            return np.inf
        sf, sb = state
        val = float(L_x @ x) + reg.value(x) - mu * float(np.sum(np.log(sf)))
        for sl in sb:
            val -= mu * float(np.sum(np.log(sl)))
        return val

    state = slacks_of(x)
    if state is None:
        x = dom.initial_point()
        state = slacks_of(x)
    mu = 1e-2
    for _ in range(300):
        sf, sb = state
        g = L_x + reg.grad(x) - mu / sf
        for cols, rows, sl in zip(dom.blocks, dom.block_rows, sb):
            g[cols] += mu * (rows.T @ (1.0 / sl))
        d = reg.hess_diag(x) + mu / (sf * sf)
        Minv_g = np.empty(n)
        Minv_AT = np.empty((n, m))
        for cols, rows, sl in zip(dom.blocks, dom.block_rows, sb):
            Mb = np.diag(d[cols]) + (rows.T * (mu / (sl * sl))) @ rows
            rhs = np.empty((cols.shape[0], m + 1))
            rhs[:, 0] = g[cols]
            rhs[:, 1:] = A[:, cols].T
            sol = np.linalg.solve(Mb, rhs)
            Minv_g[cols] = sol[:, 0]
            Minv_AT[cols] = sol[:, 1:]
        schur = A @ Minv_AT
        r_eq = A @ x - b
        nu = np.linalg.solve(schur, -(r_eq + A @ Minv_g))
        dx = -(Minv_g + Minv_AT @ nu)
        dec = float(np.sqrt(max(float(-g @ dx) + float(nu @ r_eq), 0.0)))
        if dec <= 1e-3:
            if mu <= 1e-6:
                return x
            mu = max(1e-6, 0.2 * mu)
            continue
        theta = 1.0
        neg = dx < 0
        if np.any(neg):
            theta = min(theta, BOUNDARY_FRACTION * float(np.min(sf[neg] / -dx[neg])))
        for cols, rows, sl in zip(dom.blocks, dom.block_rows, sb):
            rate = rows @ dx[cols]
            pos = rate > 0
            if np.any(pos):
                theta = min(theta, BOUNDARY_FRACTION * float(np.min(sl[pos] / rate[pos])))
        f0 = f_val(x, mu, state)
        gd = float(g @ dx)
        for _ in range(60):
            if f_val(x + theta * dx, mu) <= f0 + ARMIJO_C * theta * gd:
                break
            theta *= ARMIJO_SHRINK
        x = x + theta * dx
        state = slacks_of(x)
        if state is None:
            raise RejectedInput("barrier step left the feasible interior")
    return x


def _occ_identify(dom, x, rel=1e-5):
    active = []
    for cols, rows in zip(dom.blocks, dom.block_rows):
        slack = -(rows @ x[cols])
        m_b = float(np.sum(x[cols]))
        active.append(np.where(slack <= rel * m_b)[0])
    return active


def _occ_active_newton(L_x, reg, dom, x, active, tol, max_iter):
    """Damped Newton with the active band rows as exact equalities.

    Per-block KKT elimination (the regularizer Hessian is diagonal and the
    active rows live inside blocks) followed by a Schur solve over the flow
    constraints.  Returns (x, per-block multipliers, decrement, residual_inf,
    iterations).
    """
    A = dom.eq_A
    b = dom.eq_b
    m = A.shape[0]
    n = dom.n_vars

    def inactive_ok(x):
        if np.any(x <= 0):
            return False
        for cols, rows, act in zip(dom.blocks, dom.block_rows, active):
            slack = -(rows @ x[cols])
            mask = np.ones(rows.shape[0], dtype=bool)
            mask[act] = False
            m_b = float(np.sum(x[cols]))
            if np.any(slack[mask] <= -1e-12 * m_b):
                return False
        return True

    def f_val(x):
        if np.any(x <= 0):
            return np.inf
        return float(L_x @ x) + reg.value(x)

    best = None
    lambdas = [np.zeros(0)] * len(dom.blocks)
    for it in range(max_iter + 1):
        g = L_x + reg.grad(x)
        d = reg.hess_diag(x)
        Z_g = np.empty(n)
        Z_AT = np.empty((n, m))
        lam_g = []
        lam_AT = []
        rC_inf = 0.0
        for cols, rows, act in zip(dom.blocks, dom.block_rows, active):
            S = cols.shape[0]
            k = act.shape[0]
            Cb = rows[act]
            rC = Cb @ x[cols] if k else np.zeros(0)
            if k:
                rC_inf = max(rC_inf, float(np.max(np.abs(rC))) if k else 0.0)
            K = np.zeros((S + k, S + k))
            K[:S, :S] = np.diag(d[cols])
            if k:
                K[:S, S:] = Cb.T
                K[S:, :S] = Cb
            rhs = np.zeros((S + k, m + 1))
            rhs[:S, 0] = -g[cols]
            if k:
                rhs[S:, 0] = -rC
            rhs[:S, 1:] = -A[:, cols].T
            sol = np.linalg.solve(K, rhs)
            Z_g[cols] = sol[:S, 0]
            Z_AT[cols] = sol[:S, 1:]
            lam_g.append(sol[S:, 0])
            lam_AT.append(sol[S:, 1:])
        r_eq = A @ x - b
        schur = A @ Z_AT
        nu = np.linalg.solve(schur, -(A @ Z_g + r_eq))
        dx = Z_g + Z_AT @ nu
        lambdas = [lg + (lA @ nu if lA.size else 0.0) for lg, lA in zip(lam_g, lam_AT)]
        dec = float(np.sqrt(max(float(np.sum(d * dx * dx)), 0.0)))
        r_inf = max(float(np.max(np.abs(r_eq))) if m else 0.0, rC_inf)
        if best is None or dec < best[2]:
            best = (x.copy(), [l.copy() for l in lambdas], dec, r_inf, it)
        if dec <= tol and r_inf <= max(tol, 1e-11):
            return x, lambdas, dec, r_inf, it
        if it == max_iter:
            break
        theta = 1.0
        neg = dx < 0
        if np.any(neg):
            theta = min(theta, BOUNDARY_FRACTION * float(np.min(x[neg] / -dx[neg])))
        for cols, rows, act in zip(dom.blocks, dom.block_rows, active):
            mask = np.ones(rows.shape[0], dtype=bool)
            mask[act] = False
            if not np.any(mask):
                continue
            slack = -(rows[mask] @ x[cols])
            rate = rows[mask] @ dx[cols]
            # Rows hugging the boundary are active-set churn; do not let them
            # collapse the step length.
            m_b = float(np.sum(x[cols]))
            pos = (rate > 0) & (slack > 1e-13 * m_b)
            if np.any(pos):
                theta = min(theta, BOUNDARY_FRACTION * float(np.min(slack[pos] / rate[pos])))
        f0 = f_val(x)
        gd = float(g @ dx)
        theta0 = theta
        for _ in range(60):
            cand = x + theta * dx
            if f_val(cand) <= f0 + ARMIJO_C * theta * gd and inactive_ok(cand):
                break
            theta *= ARMIJO_SHRINK
        x = x + theta * dx
    xb, lb, dec, r_inf, it = best
    raise ConvergenceError(
        f"occupancy active-set Newton stalled at decrement {dec:.3e} > tol {tol:.1e}",
        iterate=Iterate(w=dom.to_w(xb), kkt_residual=max(dec, r_inf), feasibility_slack=_occ_slacks(dom, xb), x=xb),
        residual=dec,
    )
