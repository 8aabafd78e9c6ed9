"""Oblivious adversarial loss generators.

Every generator is a pure function of (round, seed): the interface receives
no learner state, so obliviousness is structural.  Outputs are range-correct
by construction; the admissible ranges are [-1,1]^K for semi-bandits,
[0,1]^(H,S,A) for MDPs, and L2 norm at most 1 for linear bandits.
"""

from __future__ import annotations

import numpy as np

from .errors import RejectedInput


def _round_rng(seed, t):
    key = np.random.SeedSequence((int(seed), int(t))).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class LossGenerator:
    def losses_for_round(self, t):
        raise NotImplementedError

    def spec(self):
        raise NotImplementedError


class FixedGap(LossGenerator):
    """Constant loss vector: ``base`` on the best set, ``base + gap`` elsewhere."""

    def __init__(self, K, base, gap, best_set, norm_cap=None):
        self.K = int(K)
        self.base = float(base)
        self.gap = float(gap)
        self.best_set = sorted(int(i) for i in best_set)
        if any(not 0 <= i < self.K for i in self.best_set):
            raise RejectedInput("best_set indices out of range")
        vec = np.full(self.K, self.base + self.gap)
        vec[self.best_set] = self.base
        if np.max(np.abs(vec)) > 1:
            raise RejectedInput("FixedGap losses must stay in [-1, 1]")
        if norm_cap is not None and np.linalg.norm(vec) > norm_cap:
            raise RejectedInput(f"FixedGap losses exceed the norm cap {norm_cap}")
        self._vec = vec

    def losses_for_round(self, t):
        return self._vec.copy()

    def spec(self):
        return {"kind": "fixed_gap", "K": self.K, "base": self.base, "gap": self.gap, "best": self.best_set}


class SeededIID(LossGenerator):
    """Independent per-round losses, counter-seeded per round.

    ``dist`` is one of {"kind": "uniform", "low": .., "high": ..} with
    [low, high] inside [-1, 1], or {"kind": "uniform_ball", "norm_cap": c}
    which draws entries uniform in [-c/sqrt(K), c/sqrt(K)] so the L2 norm
    never exceeds c (linear-bandit flavor).
    """

    def __init__(self, K, dist, seed):
        self.K = int(K)
        self.dist = dict(dist)
        self.seed = int(seed)
        kind = self.dist.get("kind")
        if kind == "uniform":
            lo, hi = float(self.dist["low"]), float(self.dist["high"])
            if lo > hi or lo < -1 or hi > 1:
                raise RejectedInput("uniform losses need -1 <= low <= high <= 1")
        elif kind == "uniform_ball":
            cap = float(self.dist["norm_cap"])
            if not 0 < cap <= 1:
                raise RejectedInput("uniform_ball needs norm_cap in (0, 1]")
        else:
            raise RejectedInput(f"unknown loss distribution kind: {kind!r}")

    def losses_for_round(self, t):
        rng = _round_rng(self.seed, t)
        kind = self.dist["kind"]
        if kind == "uniform":
            return rng.uniform(self.dist["low"], self.dist["high"], size=self.K)
        cap = float(self.dist["norm_cap"])
        bound = cap / np.sqrt(self.K)
        return rng.uniform(-bound, bound, size=self.K)

    def spec(self):
        return {"kind": "seeded_iid", "K": self.K, "dist": self.dist, "seed": self.seed}


class ShiftingPhases(LossGenerator):
    """Piecewise-constant phases: list of (last_round, vector)."""

    def __init__(self, phases):
        self.phases = [(int(t_end), np.asarray(v, dtype=float)) for t_end, v in phases]
        if not self.phases:
            raise RejectedInput("need at least one phase")
        for _, v in self.phases:
            if np.max(np.abs(v)) > 1:
                raise RejectedInput("phase losses must stay in [-1, 1]")

    def losses_for_round(self, t):
        for t_end, v in self.phases:
            if t <= t_end:
                return v.copy()
        return self.phases[-1][1].copy()

    def spec(self):
        return {"kind": "shifting_phases", "phases": [[t, v.tolist()] for t, v in self.phases]}


class BlockRepetition(LossGenerator):
    """Repeats each inner round's loss for ``block_len`` consecutive rounds."""

    def __init__(self, inner, block_len):
        if block_len < 1:
            raise RejectedInput("block length must be at least 1")
        self.inner = inner
        self.block_len = int(block_len)

    def losses_for_round(self, t):
        block = (t - 1) // self.block_len + 1
        return self.inner.losses_for_round(block)

    def spec(self):
        return {"kind": "block_repetition", "block_len": self.block_len, "inner": self.inner.spec()}


class _GapBlockInner(LossGenerator):
    """Per-block +-(1-gap) noise with a hidden best B-set getting a -gap bonus."""

    def __init__(self, K, B, gap, seed):
        self.K = int(K)
        self.B = int(B)
        self.gap = float(gap)
        self.seed = int(seed)
        rng = _round_rng(seed, 0)
        self.best = np.sort(rng.choice(self.K, size=self.B, replace=False))

    def losses_for_round(self, t):
        rng = _round_rng(self.seed, t)
        signs = rng.integers(0, 2, size=self.K) * 2 - 1
        vec = signs * (1.0 - self.gap)
        vec = vec.astype(float)
        vec[self.best] -= self.gap
        return vec

    def spec(self):
        return {"kind": "gap_block_inner", "K": self.K, "B": self.B, "gap": self.gap, "seed": self.seed}


def make_lower_bound_env(d, B, K, T, seed, gap=0.25):
    """Block-repetition stress environment from the constant-delay lower-bound
    construction: a seeded +-gap sequence on B-sets, each block of length d a
    copy of one inner round.  Reporting-only; no regret magnitude is asserted."""
    if B > K // 2:
        raise RejectedInput("lower-bound construction requires B <= K/2")
    if d < 1:
        raise RejectedInput("block length d must be at least 1")
    return BlockRepetition(_GapBlockInner(K, B, gap, seed), d)


class MdpFixedGap(LossGenerator):
    """Constant (H,S,A) cost tensor: ``base`` for the best action per (h,s),
    ``base + gap`` otherwise."""

    def __init__(self, H, S, A, base, gap, best_actions=None):
        self.H, self.S, self.A = int(H), int(S), int(A)
        if best_actions is None:
            best_actions = np.zeros((self.H, self.S), dtype=np.int64)
        self.best = np.asarray(best_actions, dtype=np.int64)
        tensor = np.full((self.H, self.S, self.A), float(base) + float(gap))
        for h in range(self.H):
            for s in range(self.S):
                tensor[h, s, self.best[h, s]] = float(base)
        if tensor.min() < 0 or tensor.max() > 1:
            raise RejectedInput("MDP losses must stay in [0, 1]")
        self._tensor = tensor

    def losses_for_round(self, t):
        return self._tensor.copy()

    def spec(self):
        return {"kind": "mdp_fixed_gap", "H": self.H, "S": self.S, "A": self.A, "best": self.best.tolist()}


class MdpSeededIID(LossGenerator):
    """Per-round iid uniform costs on [low, high] inside [0, 1], counter-seeded."""

    def __init__(self, H, S, A, seed, low=0.0, high=1.0):
        self.H, self.S, self.A = int(H), int(S), int(A)
        self.seed = int(seed)
        if not 0 <= low <= high <= 1:
            raise RejectedInput("MDP losses need 0 <= low <= high <= 1")
        self.low, self.high = float(low), float(high)

    def losses_for_round(self, t):
        rng = _round_rng(self.seed, t)
        return rng.uniform(self.low, self.high, size=(self.H, self.S, self.A))

    def spec(self):
        return {
            "kind": "mdp_seeded_iid",
            "H": self.H,
            "S": self.S,
            "A": self.A,
            "seed": self.seed,
            "low": self.low,
            "high": self.high,
        }


def generator_from_spec(spec):
    kind = spec.get("kind")
    if kind == "fixed_gap":
        return FixedGap(spec["K"], spec["base"], spec["gap"], spec["best"], spec.get("norm_cap"))
    if kind == "seeded_iid":
        return SeededIID(spec["K"], spec["dist"], spec["seed"])
    if kind == "shifting_phases":
        return ShiftingPhases(spec["phases"])
    if kind == "block_repetition":
        return BlockRepetition(generator_from_spec(spec["inner"]), spec["block_len"])
    if kind == "gap_block_inner":
        return _GapBlockInner(spec["K"], spec["B"], spec["gap"], spec["seed"])
    if kind == "lower_bound":
        return make_lower_bound_env(spec["d"], spec["B"], spec["K"], spec.get("T", 0), spec["seed"], spec.get("gap", 0.25))
    if kind == "mdp_fixed_gap":
        return MdpFixedGap(spec["H"], spec["S"], spec["A"], spec.get("base", 0.1), spec.get("gap", 0.5), spec.get("best"))
    if kind == "mdp_seeded_iid":
        return MdpSeededIID(spec["H"], spec["S"], spec["A"], spec["seed"], spec.get("low", 0.0), spec.get("high", 1.0))
    raise RejectedInput(f"unknown loss generator kind: {kind!r}")
