"""Experiment configuration, replication runner, regret accounting, export.

Pseudo-regret uses exact expected per-round losses where available (the mean
vector for semi-bandits, the played policy's true occupancy for MDPs, the
iterate for linear bandits); realized losses are recorded alongside.  The
comparator is the exact best fixed action/policy/point in hindsight at the
horizon.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import environments as envs
from . import delays as dly
from . import linbandit as lin
from . import mdp as mdpm
from . import semibandit as smb
from .domains import BallDomain, PolytopeDomain
from .errors import ConfigError

DESK_CAPS = {
    "semi-bandit": {"K": 64, "T": 100_000},
    "mdp": {"S": 6, "A": 4, "H": 6, "T": 50_000},
    "linear": {"K": 64, "T": 100_000},
    "replications": 1000,
}


@dataclass
class RegretTrace:
    """Per-round arrays for one replication, plus run metadata."""

    rounds: np.ndarray
    cum_expected: np.ndarray
    cum_realized: np.ndarray
    cum_comparator: np.ndarray
    pseudo_regret: np.ndarray
    missing: np.ndarray
    epoch: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    setting: str
    T: int
    replications: int
    seed: int
    tuning: dict
    delays: dict
    environment: dict
    domain: dict
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        cfg = cls(
            setting=d.get("setting", ""),
            T=int(d.get("T", 0)),
            replications=int(d.get("replications", 1)),
            seed=int(d.get("seed", 0)),
            tuning=dict(d.get("tuning", {"mode": "auto"})),
            delays=dict(d.get("delays", {})),
            environment=dict(d.get("environment", {})),
            domain=dict(d.get("domain", {})),
            output=dict(d.get("output", {})),
        )
        cfg.validate()
        return cfg

    def to_dict(self):
        return {
            "setting": self.setting,
            "T": self.T,
            "replications": self.replications,
            "seed": self.seed,
            "tuning": self.tuning,
            "delays": self.delays,
            "environment": self.environment,
            "domain": self.domain,
            "output": self.output,
        }

    def validate(self):
        if self.setting not in ("semi-bandit", "mdp", "linear"):
            raise ConfigError(f"unknown setting {self.setting!r}; expected semi-bandit, mdp, or linear")
        caps = DESK_CAPS[self.setting]
        if not 1 <= self.T <= caps["T"]:
            raise ConfigError(f"T={self.T} violates the desk-scale cap 1 <= T <= {caps['T']} for {self.setting}")
        if not 1 <= self.replications <= DESK_CAPS["replications"]:
            raise ConfigError(f"replications={self.replications} violates the cap 1..{DESK_CAPS['replications']}")
        mode = self.tuning.get("mode", "auto")
        if mode not in ("auto", "explicit", "doubling"):
            raise ConfigError(f"tuning mode {mode!r} must be auto, explicit, or doubling")
        if mode == "explicit":
            eta = self.tuning.get("eta")
            gamma = self.tuning.get("gamma")
            if eta is None or gamma is None or eta <= 0 or not 0 < gamma < 1:
                raise ConfigError("explicit tuning requires eta > 0 and gamma in (0, 1)")
        if self.setting == "semi-bandit":
            if "vertices" in self.domain:
                V = np.asarray(self.domain["vertices"])
                if V.ndim != 2:
                    raise ConfigError("vertices must be a 2-d list")
                K = V.shape[1]
            else:
                K = int(self.domain.get("K", 0))
                B = int(self.domain.get("B", 0))
                if not 1 <= B <= K:
                    raise ConfigError(f"semi-bandit domain needs 1 <= B <= K, got B={B}, K={K}")
            if K > caps["K"]:
                raise ConfigError(f"K={K} violates the desk-scale cap K <= {caps['K']}")
        elif self.setting == "mdp":
            for name in ("H", "S", "A"):
                val = int(self.domain.get(name, 0))
                if not 1 <= val <= caps[name]:
                    raise ConfigError(f"{name}={val} violates the desk-scale cap 1 <= {name} <= {caps[name]}")
            if "transitions" not in self.domain and "random_mdp" not in self.domain:
                raise ConfigError("mdp domain needs 'transitions' or a 'random_mdp' recipe")
        else:
            K = int(self.domain.get("K", 0))
            if not 1 <= K <= caps["K"]:
                raise ConfigError(f"K={K} violates the desk-scale cap 1 <= K <= {caps['K']}")
            if "G" not in self.domain and float(self.domain.get("B", 0)) <= 0:
                raise ConfigError("linear domain needs a ball radius B > 0 or polytope constraints G, h")
        if not self.delays:
            raise ConfigError("config needs a delay schedule spec")
        if not self.environment:
            raise ConfigError("config needs a loss generator spec")
        dly.schedule_from_spec(self.delays)
        envs.generator_from_spec(self.environment)


def _build_actions(cfg):
    if "vertices" in cfg.domain:
        return smb.ExplicitVertices(cfg.domain["vertices"])
    return smb.MSets(int(cfg.domain["K"]), int(cfg.domain["B"]))


def _build_mdp_spec(cfg):
    d = cfg.domain
    if "transitions" in d:
        return mdpm.MdpSpec(H=int(d["H"]), S=int(d["S"]), A=int(d["A"]), p=np.asarray(d["transitions"], dtype=float), s_init=int(d.get("s_init", 0)))
    recipe = d["random_mdp"]
    spec = mdpm.random_mdp(int(d["H"]), int(d["S"]), int(d["A"]), int(recipe["seed"]), float(recipe.get("concentration", 1.0)))
    spec.s_init = int(d.get("s_init", 0))
    return spec


def _build_lin_domain(cfg):
    d = cfg.domain
    if "G" in d:
        return PolytopeDomain(np.asarray(d["G"], dtype=float), np.asarray(d["h"], dtype=float))
    return BallDomain(int(d["K"]), float(d["B"]))


def _tuned_params(cfg, schedule, d_max_override=None):
    T = cfg.T
    mode = cfg.tuning.get("mode", "auto")
    D = schedule.total_missing(T)
    d_max = d_max_override if d_max_override is not None else schedule.d_max(T)
    if cfg.setting == "semi-bandit":
        actions = _build_actions(cfg)
        params = smb.tune_semibandit(actions.max_l1(), actions.K, T, D, d_max)
        if mode == "explicit":
            params.eta = float(cfg.tuning["eta"])
            params.gamma = float(cfg.tuning["gamma"])
        return params
    if cfg.setting == "mdp":
        spec = _build_mdp_spec(cfg)
        params = mdpm.tune_mdp(spec.H, spec.S, spec.A, T, D, d_max)
        if mode == "explicit":
            params.eta = float(cfg.tuning["eta"])
            params.gamma = float(cfg.tuning["gamma"])
        return params
    dom = _build_lin_domain(cfg)
    nu = lin.barrier_for_domain(dom).nu
    B = dom.B if isinstance(dom, BallDomain) else float(np.max(np.abs(cfg.domain.get("radius_hint", 1.0))))
    params = lin.tune_linban(B, dom.n_vars, T, D, d_max, nu)
    if mode == "explicit":
        params.eta = float(cfg.tuning["eta"])
        params.gamma = float(cfg.tuning["gamma"])
    return params


def theorem_bound_for_config(cfg):
    schedule = dly.schedule_from_spec(cfg.delays)
    params = _tuned_params(cfg, schedule)
    if cfg.setting == "semi-bandit":
        return smb.theorem_bound_comb(params)
    if cfg.setting == "mdp":
        return mdpm.theorem_bound_mdp(params)
    return lin.theorem_bound_lin(params)


def _losses_matrix(env, T):
    first = env.losses_for_round(1)
    out = np.empty((T,) + np.shape(first))
    out[0] = first
    for t in range(2, T + 1):
        out[t - 1] = env.losses_for_round(t)
    return out


def run_experiment(cfg):
    """Run all replications; deterministic given (config, seed)."""
    schedule = dly.schedule_from_spec(cfg.delays)
    env = envs.generator_from_spec(cfg.environment)
    traces = []
    for rep in range(cfg.replications):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, rep)))
        if cfg.setting == "semi-bandit":
            traces.append(_run_semibandit(cfg, schedule, env, rng))
        elif cfg.setting == "mdp":
            traces.append(_run_mdp(cfg, schedule, env, rng))
        else:
            traces.append(_run_linear(cfg, schedule, env, rng))
    return traces


def _mode(cfg):
    return cfg.tuning.get("mode", "auto")


def _loop(cfg, schedule, play):
    """Drive the round loop; ``play(learner, t, arrivals)`` runs one round.

    In doubling mode the learner is rebuilt per epoch through the factory in
    ``play.factory``; otherwise a single learner instance is used throughout.
    """
    T = cfg.T
    if _mode(cfg) == "doubling":
        D = schedule.total_missing(T)
        epochs, guesses = dly.doubling_run(play.factory, schedule, T, D, play)
        return epochs, guesses
    state = dly.DelayState(schedule, T)
    learner = play.factory(T, schedule.total_missing(T), schedule.d_max(T), 1)
    for t in range(1, T + 1):
        newly = state.advance(t)
        play(learner, t, newly)
    return np.ones(T, dtype=np.int64), [schedule.d_max(T)]


class _SemiBanditPlay:
    def __init__(self, cfg, losses, actions, rng):
        self.cfg = cfg
        self.losses = losses
        self.actions = actions
        self.rng = rng
        self.payloads = {}
        self.expected = np.zeros(cfg.T)
        self.realized = np.zeros(cfg.T)
        self.learner = None

    def factory(self, T, D, d_max_guess, epoch):
        params = smb.tune_semibandit(self.actions.max_l1(), self.actions.K, T, D, d_max_guess)
        mode = _mode(self.cfg)
        if mode == "explicit":
            params.eta = float(self.cfg.tuning["eta"])
            params.gamma = float(self.cfg.tuning["gamma"])
        strict = mode == "auto"
        self.learner = smb.SemiBanditLearner(
            self.actions, params, np.random.default_rng(self.rng.spawn(1)[0]), strict=strict
        )
        return self.learner

    def __call__(self, learner, t, newly):
        arrivals = [(tau, self.payloads[tau]) for tau in newly if tau in self.payloads]
        a = learner.step(t, arrivals)
        loss = self.losses[t - 1]
        learner.note_true_loss(loss)
        self.payloads[t] = a * loss
        self.expected[t - 1] = float(learner.w_t @ loss)
        self.realized[t - 1] = float(a @ loss)


def _run_semibandit(cfg, schedule, env, rng):
    T = cfg.T
    actions = _build_actions(cfg)
    losses = _losses_matrix(env, T)
    play = _SemiBanditPlay(cfg, losses, actions, rng)
    epochs, guesses = _loop(cfg, schedule, play)
    a_star = smb.best_in_hindsight_comb(losses.sum(axis=0), actions)
    comp = losses @ a_star.astype(float)
    params = _tuned_params(cfg, schedule)
    return _finalize_trace(cfg, schedule, play.expected, play.realized, comp, epochs, guesses,
                           bound=smb.theorem_bound_comb(params), params=params,
                           diagnostics=play.learner.diagnostics,
                           extra={"comparator_action": a_star.tolist()})


class _MdpPlay:
    def __init__(self, cfg, losses, spec, rng):
        self.cfg = cfg
        self.losses = losses
        self.spec = spec
        self.rng = rng
        self.payloads = {}
        self.expected = np.zeros(cfg.T)
        self.realized = np.zeros(cfg.T)
        self.learner = None

    def factory(self, T, D, d_max_guess, epoch):
        params = mdpm.tune_mdp(self.spec.H, self.spec.S, self.spec.A, T, D, d_max_guess)
        mode = _mode(self.cfg)
        if mode == "explicit":
            params.eta = float(self.cfg.tuning["eta"])
            params.gamma = float(self.cfg.tuning["gamma"])
        strict = mode == "auto"
        self.learner = mdpm.MdpLearner(
            self.spec, params, np.random.default_rng(self.rng.spawn(1)[0]), T=self.cfg.T, strict=strict
        )
        return self.learner

    def __call__(self, learner, t, newly):
        arrivals = [(tau, self.payloads[tau]) for tau in newly if tau in self.payloads]
        policy = learner.step(t, arrivals)
        loss = self.losses[t - 1]
        learner.note_true_loss(loss)
        traj = mdpm.rollout(policy, self.spec, loss, self.rng)
        self.payloads[t] = traj
        self.expected[t - 1] = float(np.sum(learner.true_occupancy_sa * loss))
        self.realized[t - 1] = float(sum(step[2] for step in traj))


def _run_mdp(cfg, schedule, env, rng):
    T = cfg.T
    spec = _build_mdp_spec(cfg)
    losses = _losses_matrix(env, T)
    play = _MdpPlay(cfg, losses, spec, rng)
    epochs, guesses = _loop(cfg, schedule, play)
    pol_star, _ = mdpm.best_in_hindsight_mdp(losses.sum(axis=0), spec)
    w_star_sa = mdpm.occupancy_from_policy(mdpm.deterministic_policy_matrix(pol_star, spec.A), spec.p, spec.s_init).sum(axis=3)
    comp = np.array([float(np.sum(w_star_sa * losses[t])) for t in range(T)])
    params = _tuned_params(cfg, schedule)
    return _finalize_trace(cfg, schedule, play.expected, play.realized, comp, epochs, guesses,
                           bound=mdpm.theorem_bound_mdp(params), params=params,
                           diagnostics=play.learner.diagnostics,
                           extra={"comparator_policy": pol_star.tolist()})


class _LinearPlay:
    def __init__(self, cfg, losses, dom, rng):
        self.cfg = cfg
        self.losses = losses
        self.dom = dom
        self.rng = rng
        self.payloads = {}
        self.expected = np.zeros(cfg.T)
        self.realized = np.zeros(cfg.T)
        self.w_first = None
        self.learner = None

    def factory(self, T, D, d_max_guess, epoch):
        nu = lin.barrier_for_domain(self.dom).nu
        B = self.dom.B if isinstance(self.dom, BallDomain) else 1.0
        params = lin.tune_linban(B, self.dom.n_vars, T, D, d_max_guess, nu)
        mode = _mode(self.cfg)
        if mode == "explicit":
            params.eta = float(self.cfg.tuning["eta"])
            params.gamma = float(self.cfg.tuning["gamma"])
        strict = mode == "auto"
        self.learner = lin.LinBanditLearner(
            self.dom, params, np.random.default_rng(self.rng.spawn(1)[0]), strict=strict
        )
        return self.learner

    def __call__(self, learner, t, newly):
        arrivals = [(tau, self.payloads[tau]) for tau in newly if tau in self.payloads]
        a = learner.step(t, arrivals)
        loss = self.losses[t - 1]
        learner.note_true_loss(loss)
        self.payloads[t] = float(loss @ a)
        if self.w_first is None:
            self.w_first = learner.w_t.copy()
        self.expected[t - 1] = float(learner.w_t @ loss)
        self.realized[t - 1] = float(a @ loss)


def _run_linear(cfg, schedule, env, rng):
    T = cfg.T
    dom = _build_lin_domain(cfg)
    losses = _losses_matrix(env, T)
    play = _LinearPlay(cfg, losses, dom, rng)
    epochs, guesses = _loop(cfg, schedule, play)
    L_total = losses.sum(axis=0)
    u_star = lin.best_in_hindsight_lin(L_total, dom)
    comp = losses @ u_star
    delta = 1.0 / np.sqrt(T)
    u_shift = lin.shifted_comparator(u_star, play.w_first, delta)
    params = _tuned_params(cfg, schedule)
    extra = {
        "comparator_point": u_star.tolist(),
        "shifted_comparator_point": u_shift.tolist(),
        "shifted_comparator_total_loss": float((losses @ u_shift).sum()),
        "infeasible_actions": play.learner.infeasible_actions,
    }
    return _finalize_trace(cfg, schedule, play.expected, play.realized, comp, epochs, guesses,
                           bound=lin.theorem_bound_lin(params), params=params,
                           diagnostics=play.learner.diagnostics, extra=extra)


def _finalize_trace(cfg, schedule, expected, realized, comp, epochs, guesses, bound, params, diagnostics, extra):
    T = cfg.T
    delays_arr = schedule.delays(T)
    taus = np.arange(1, T + 1)
    arrivals_round = np.sort(taus + delays_arr)
    observed_counts = np.searchsorted(arrivals_round, taus, side="left")
    missing = (taus - 1) - observed_counts
    cum_expected = np.cumsum(expected)
    cum_realized = np.cumsum(realized)
    cum_comp = np.cumsum(comp)
    return RegretTrace(
        rounds=taus,
        cum_expected=cum_expected,
        cum_realized=cum_realized,
        cum_comparator=cum_comp,
        pseudo_regret=cum_expected - cum_comp,
        missing=missing,
        epoch=np.asarray(epochs, dtype=np.int64),
        meta={
            "theorem_bound": float(bound),
            "params": vars(params),
            "diagnostics": dict(diagnostics),
            "epoch_guesses": list(guesses),
            "D": int(schedule.total_missing(T)),
            "total_delay": int(schedule.total_delay(T)),
            "d_max": int(schedule.d_max(T)),
            **extra,
        },
    )


def aggregate(traces):
    """Per-round mean/median/quantile summary across replications."""
    if not traces:
        raise ConfigError("aggregate needs at least one trace")
    T = len(traces[0].rounds)
    P = np.stack([tr.pseudo_regret for tr in traces])
    return {
        "round": traces[0].rounds,
        "pseudo_regret_mean": P.mean(axis=0),
        "pseudo_regret_median": np.median(P, axis=0),
        "pseudo_regret_q10": np.quantile(P, 0.10, axis=0),
        "pseudo_regret_q90": np.quantile(P, 0.90, axis=0),
        "theorem_bound": np.full(T, traces[0].meta["theorem_bound"]),
        "missing_count": traces[0].missing,
        "epoch": traces[0].epoch,
        "replications": len(traces),
    }


CSV_COLUMNS = [
    "round",
    "pseudo_regret_mean",
    "pseudo_regret_q10",
    "pseudo_regret_q90",
    "theorem_bound",
    "missing_count",
    "epoch",
]


def export(summary, path, fmt="csv", config=None):
    """Write the aggregate summary as CSV or JSON; returns the path written."""
    if not summary or "round" not in summary or len(summary["round"]) == 0:
        raise ConfigError("refusing to export an empty summary")
    os.makedirs(os.path.dirname(os.path.abspath(path)) or ".", exist_ok=True)
    if fmt == "csv":
        lines = [",".join(CSV_COLUMNS)]
        T = len(summary["round"])
        for i in range(T):
            row = [
                str(int(summary["round"][i])),
                repr(float(summary["pseudo_regret_mean"][i])),
                repr(float(summary["pseudo_regret_q10"][i])),
                repr(float(summary["pseudo_regret_q90"][i])),
                repr(float(summary["theorem_bound"][i])),
                str(int(summary["missing_count"][i])),
                str(int(summary["epoch"][i])),
            ]
            lines.append(",".join(row))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        return path
    if fmt == "json":
        payload = {
            "config": config.to_dict() if config is not None else None,
            "replications": int(summary["replications"]),
            "columns": {
                key: [float(v) for v in summary[key]]
                for key in (
                    "pseudo_regret_mean",
                    "pseudo_regret_median",
                    "pseudo_regret_q10",
                    "pseudo_regret_q90",
                    "theorem_bound",
                )
            },
            "round": [int(v) for v in summary["round"]],
            "missing_count": [int(v) for v in summary["missing_count"]],
            "epoch": [int(v) for v in summary["epoch"]],
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        return path
    raise ConfigError(f"unknown export format {fmt!r}; expected csv or json")
