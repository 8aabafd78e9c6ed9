"""Delay schedules, feedback-arrival bookkeeping, and the doubling wrapper.

Feedback emitted in round ``t`` arrives at the end of round ``t + d_t``: the
observed index set at the start of round ``t`` is ``o_t = {tau : tau + d_tau < t}``
and ``m_t = [t-1] \\ o_t``.  Feedback that would arrive after the horizon is
dropped.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import RejectedInput


class DelaySchedule:
    """Base class; subclasses provide an integer delay per round."""

    def delay(self, t):
        raise NotImplementedError

    def delays(self, T):
        return np.array([self.delay(t) for t in range(1, T + 1)], dtype=np.int64)

    def d_max(self, T):
        """Maximum realized delay over the horizon, clamped to at least 1."""
        return max(1, int(np.max(self.delays(T))))

    def total_delay(self, T):
        return int(np.sum(self.delays(T)))

    def total_missing(self, T):
        """D = sum_t |m_t|; each tau is missing for min(d_tau, T - tau) rounds."""
        d = self.delays(T)
        taus = np.arange(1, T + 1)
        return int(np.sum(np.minimum(d, T - taus)))

    def spec(self):
        raise NotImplementedError


class Constant(DelaySchedule):
    def __init__(self, d):
        if d < 0 or int(d) != d:
            raise RejectedInput("delay must be a nonnegative integer")
        self.d = int(d)

    def delay(self, t):
        return self.d

    def spec(self):
        return {"kind": "constant", "d": self.d}


class ExplicitDelays(DelaySchedule):
    def __init__(self, values):
        vals = np.asarray(values, dtype=np.int64)
        if vals.ndim != 1 or np.any(vals < 0):
            raise RejectedInput("explicit delays must be a 1-d nonnegative integer sequence")
        self.values = vals

    def delay(self, t):
        if not 1 <= t <= len(self.values):
            raise RejectedInput(f"round {t} outside the explicit schedule of length {len(self.values)}")
        return int(self.values[t - 1])

    def spec(self):
        return {"kind": "explicit", "values": self.values.tolist()}


class SeededRandomDelays(DelaySchedule):
    """Counter-based random delays: round t draws from Philox keyed on (seed, t),
    so the schedule is reproducible independent of consumption order."""

    def __init__(self, dist, seed):
        self.dist = dict(dist)
        self.seed = int(seed)
        kind = self.dist.get("kind")
        if kind == "uniform_int":
            lo, hi = int(self.dist["low"]), int(self.dist["high"])
            if lo < 0 or hi < lo:
                raise RejectedInput("uniform_int requires 0 <= low <= high")
        elif kind == "geometric":
            p = float(self.dist["p"])
            if not 0 < p <= 1:
                raise RejectedInput("geometric requires p in (0, 1]")
        else:
            raise RejectedInput(f"unknown delay distribution kind: {kind!r}")

    def delay(self, t):
        rng = np.random.Generator(np.random.Philox(key=np.random.SeedSequence((self.seed, t)).generate_state(2, np.uint64)))
        kind = self.dist["kind"]
        if kind == "uniform_int":
            return int(rng.integers(self.dist["low"], self.dist["high"] + 1))
        p = float(self.dist["p"])
        d = int(rng.geometric(p)) - 1
        cap = int(self.dist.get("cap", 10**6))
        return min(d, cap)

    def spec(self):
        return {"kind": "random", "dist": self.dist, "seed": self.seed}


def schedule_from_spec(spec):
    kind = spec.get("kind")
    if kind == "constant":
        return Constant(spec["d"])
    if kind == "explicit":
        return ExplicitDelays(spec["values"])
    if kind == "random":
        return SeededRandomDelays(spec["dist"], spec["seed"])
    raise RejectedInput(f"unknown delay schedule kind: {kind!r}")


class DelayState:
    """Per-run arrival bookkeeping for one schedule over one horizon."""

    def __init__(self, schedule, T):
        if T < 1:
            raise RejectedInput("horizon must be at least 1")
        self.schedule = schedule
        self.T = int(T)
        self.delays = schedule.delays(T)
        self._arrivals = {}
        for tau in range(1, T + 1):
            arr = tau + int(self.delays[tau - 1])
            self._arrivals.setdefault(arr, []).append(tau)
        self.observed_count = 0
        self._missing_total = 0
        self._round = 0

    def arrivals_at(self, t):
        """{tau : tau + d_tau = t}: feedback arriving at the end of round t."""
        if not 1 <= t <= self.T:
            raise RejectedInput(f"round {t} outside horizon {self.T}")
        return sorted(self._arrivals.get(t, []))

    def available_at(self, t):
        """Feedback usable from the start of round t (arrived at end of t-1)."""
        if t <= 1:
            return []
        return self.arrivals_at(t - 1)

    def observed_set(self, t):
        return {tau for tau in range(1, t) if tau + self.delays[tau - 1] < t}

    def missing_set(self, t):
        return {tau for tau in range(1, t) if tau + self.delays[tau - 1] >= t}

    def advance(self, t):
        """Advance the run to round t; returns the newly available emission rounds
        and accumulates |m_t| into the running total."""
        if t != self._round + 1:
            raise RejectedInput("rounds must be advanced in order starting from 1")
        self._round = t
        newly = self.available_at(t)
        self.observed_count += len(newly)
        self._missing_total += (t - 1) - self.observed_count
        return newly

    def missing_count(self, t):
        return len(self.missing_set(t))

    def total_missing(self):
        """D accumulated over the rounds executed so far."""
        return self._missing_total


def missing_set(state, t):
    return state.missing_set(t)


def arrivals_at(state, t):
    return state.arrivals_at(t)


def total_missing(state):
    return state.total_missing()


def doubling_run(learner_factory, schedule, T, D, play_round, max_guess_exponent=60):
    """Epoch-doubling wrapper for unknown maximum delay.

    ``learner_factory(T, D, d_max_guess, epoch)`` builds a fresh learner;
    ``play_round(learner, t, newly)`` executes one round, where ``newly`` is
    the list of newly available emission rounds belonging to the learner's
    epoch.  When an observed delay exceeds the current guess ``2**e``, the
    epoch index increments and the learner is re-initialized.

    Returns ``(per_round_epochs, guesses)`` with one epoch index per round and
    the guess used by each epoch.
    """
    state = DelayState(schedule, T)
    e = 1
    learner = learner_factory(T, D, 2**e, e)
    epoch_start = 1
    guesses = [2**e]
    epochs = np.empty(T, dtype=np.int64)
    max_observed = 0
    for t in range(1, T + 1):
        newly = state.advance(t)
        for tau in newly:
            max_observed = max(max_observed, int(state.delays[tau - 1]))
        if max_observed > 2**e and e < max_guess_exponent:
            e += 1
            learner = learner_factory(T, D, 2**e, e)
            epoch_start = t
            guesses.append(2**e)
        epochs[t - 1] = e
        play_round(learner, t, [tau for tau in newly if tau >= epoch_start])
    return epochs, guesses


def epoch_count_bound(d_max):
    """Upper bound on the number of doubling epochs for a realized d_max."""
    return int(math.ceil(math.log2(max(2, d_max)))) + 1
