"""Timing-only state inference for an eavesdropper on the update channel.

The listener sees nothing but the instants of the update requests.  Each
inter-request interval is a deterministic function of the state reported
at the request that *opened* it, so the interval sequence is the emission
sequence of a hidden Markov model over renewal states and exact smoothing
applies: a forward pass over observed intervals, a backward pass from a
flat boundary at the last request (no information from afterwards is
used, i.e. the listener does not exploit the absence of further traffic),
and pairwise joins for instants between requests.

Implementation note on the filter direction: the timing-consistency
factor multiplies the *source* state of each interval's transition (the
renewal state that emitted it), and the transition kernel runs from that
source to the next renewal state.  Placing the consistency check on the
landing state instead does not reproduce exact posteriors (it fails
against trajectory enumeration on asymmetric chains) and is not used.

Knowledge granted to the listener: the process dynamics, the applied
control plan(s), the schedule of every regime in force, and which regime
scheduled each interval (regime switches are a deterministic function of
the public timing history, so this adds no power beyond worst case).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .markov import MarkovModel, shannon_entropy, steady_state
from .policy import JointPolicy, SchedulingFunction


class InconsistentTimingError(ValueError):
    """An observed interval has zero probability under the active schedule."""

    def __init__(self, index: int, tau: int):
        super().__init__(
            f"interval #{index} (length {tau}) is impossible under the "
            f"active schedule: forward vector vanished")
        self.index = index
        self.tau = tau


@dataclass(frozen=True)
class TimingTrace:
    """Observed inter-request intervals; request times start at 0."""

    intervals: tuple[int, ...]

    @property
    def transmission_times(self) -> tuple[int, ...]:
        times = [0]
        for tau in self.intervals:
            times.append(times[-1] + tau)
        return tuple(times)

    def to_json(self) -> str:
        return json.dumps(list(self.intervals))

    @staticmethod
    def from_json(text: str) -> "TimingTrace":
        return TimingTrace(tuple(int(x) for x in json.loads(text)))


@dataclass(frozen=True)
class SmoothedBelief:
    belief: np.ndarray
    time: int
    delay: int


class SegmentModel:
    """One scheduling regime as the listener models it.

    Holds, per renewal state, the interval the regime assigns and the
    step kernels needed for smoothing: prefix rows (the belief about the
    state ``l`` steps into a segment opened at a known state) and suffix
    matrices (the transition operator from ``l`` steps in to the end of
    the segment).  Estimation dynamics share a single matrix, so kernels
    collapse to matrix powers; control dynamics are per-state products of
    the plan's action matrices.
    """

    def __init__(self, model: MarkovModel, taus: np.ndarray,
                 control: np.ndarray | None, t_max: int):
        n = model.num_states
        self.num_states = n
        self.t_max = t_max
        self.taus = np.asarray(taus, dtype=np.int64)
        if self.taus.shape != (n,) or np.any(self.taus < 1) or np.any(self.taus > t_max):
            raise ValueError("schedule must assign each state an interval in 1..t_max")
        self.homogeneous = model.num_actions == 1
        if self.homogeneous:
            powers = [np.eye(n)]
            for _ in range(t_max):
                powers.append(powers[-1] @ model.transitions[0])
            self._powers = powers
        else:
            if control is None:
                raise ValueError("control models need a control table")
            pre = np.empty((n, t_max + 1, n))
            suf = np.zeros((n, t_max + 1, n, n))
            for s in range(n):
                steps = [model.transitions[int(control[s, t])] for t in range(t_max)]
                row = np.zeros(n)
                row[s] = 1.0
                pre[s, 0] = row
                for t in range(t_max):
                    pre[s, t + 1] = pre[s, t] @ steps[t]
                tau = int(self.taus[s])
                acc = np.eye(n)
                suf[s, tau] = acc
                for t in range(tau - 1, -1, -1):
                    acc = steps[t] @ acc
                    suf[s, t] = acc
            self._pre = pre
            self._suf = suf

    @classmethod
    def goal_oriented(cls, model: MarkovModel, sigma: SchedulingFunction,
                      policy: JointPolicy | None = None) -> "SegmentModel":
        control = policy.control if policy is not None else None
        return cls(model, sigma.intervals, control, sigma.t_max)

    @classmethod
    def periodic(cls, model: MarkovModel, period: int, t_max: int,
                 policy: JointPolicy | None = None) -> "SegmentModel":
        taus = np.full(model.num_states, period, dtype=np.int64)
        control = policy.control if policy is not None else None
        return cls(model, taus, control, t_max)

    def emission(self, tau: int) -> np.ndarray:
        """Indicator over renewal states that emit an interval of ``tau``."""
        return (self.taus == tau).astype(float)

    def prefix_rows(self, ell: int) -> np.ndarray:
        """(S, S) matrix whose row s is the belief ``ell`` steps after s."""
        if self.homogeneous:
            return self._powers[ell]
        return self._pre[:, ell, :]

    def suffix(self, source: int, ell: int) -> np.ndarray:
        """Transition operator from ``ell`` steps in, to the segment end."""
        if self.homogeneous:
            return self._powers[int(self.taus[source]) - ell]
        return self._suf[source, ell]

    def interior_raw(self, weights: np.ndarray, ell: int, tau: int,
                     b_next: np.ndarray) -> np.ndarray:
        """Unnormalized interior posterior: sources weighted, pushed ``ell``
        steps in, tied to the segment end through the backward vector."""
        if self.homogeneous:
            return (weights @ self._powers[ell]) * (self._powers[tau - ell] @ b_next)
        ahead = self._suf[:, ell] @ b_next            # (source, mid)
        return (weights[:, None] * self._pre[:, ell, :] * ahead).sum(axis=0)


class EveEstimator:
    """Sequential smoother over the observed interval sequence.

    Forward vectors are renormalized at every update (the running log
    normalizer is kept in ``log_norms``); all returned beliefs are proper
    probability vectors.  Queries take an explicit horizon so earlier
    knowledge states can be reconstructed after the fact.
    """

    def __init__(self, model: MarkovModel, active: SegmentModel,
                 prior: np.ndarray | None = None):
        self.model = model
        self.num_states = model.num_states
        self.prior = np.asarray(prior, dtype=float) if prior is not None \
            else steady_state(model) if model.num_actions == 1 \
            else None
        if self.prior is None:
            raise ValueError("control models need an explicit prior")
        self.active = active
        self.times = [0]
        self.intervals: list[int] = []
        self.segment_models: list[SegmentModel] = []
        self.forwards = [self.prior / self.prior.sum()]
        self.log_norms = [0.0]
        self._backward_cache: dict[int, list[np.ndarray]] = {}

    # -- observation ------------------------------------------------------

    def set_active(self, segment_model: SegmentModel) -> None:
        """Declare the regime that schedules the currently open segment."""
        self.active = segment_model

    def observe(self, tau: int) -> "EveEstimator":
        """Consume the next interval; it closes the currently open segment."""
        if not 1 <= tau <= self.active.t_max:
            raise ValueError(f"interval {tau} outside 1..{self.active.t_max}")
        em = self.active.emission(tau)
        weighted = self.forwards[-1] * em
        nxt = weighted @ self.active.prefix_rows(tau)
        norm = nxt.sum()
        if norm <= 0.0:
            raise InconsistentTimingError(len(self.intervals) + 1, tau)
        self.intervals.append(int(tau))
        self.segment_models.append(self.active)
        self.times.append(self.times[-1] + int(tau))
        self.forwards.append(nxt / norm)
        self.log_norms.append(self.log_norms[-1] + math.log(norm))
        self._backward_cache.clear()
        return self

    @property
    def trace(self) -> TimingTrace:
        """The interval sequence observed so far, for replay/debugging."""
        return TimingTrace(tuple(self.intervals))

    def clone(self) -> "EveEstimator":
        dup = object.__new__(EveEstimator)
        dup.model = self.model
        dup.num_states = self.num_states
        dup.prior = self.prior
        dup.active = self.active
        dup.times = list(self.times)
        dup.intervals = list(self.intervals)
        dup.segment_models = list(self.segment_models)
        dup.forwards = list(self.forwards)
        dup.log_norms = list(self.log_norms)
        dup._backward_cache = {}
        return dup

    # -- smoothing --------------------------------------------------------

    def last_index(self, horizon: int) -> int:
        """Index of the last transmission at or before ``horizon``."""
        if horizon < 0:
            raise ValueError("horizon must be nonnegative")
        k = int(np.searchsorted(np.asarray(self.times), horizon, side="right")) - 1
        return min(k, len(self.intervals))

    def backward(self, horizon: int) -> list[np.ndarray]:
        """Backward vectors b_0..b_K for the given horizon, flat at b_K."""
        k_last = self.last_index(horizon)
        cached = self._backward_cache.get(k_last)
        if cached is not None:
            return cached
        vecs = [None] * (k_last + 1)
        vecs[k_last] = np.full(self.num_states, 1.0 / self.num_states)
        for k in range(k_last - 1, -1, -1):
            seg = self.segment_models[k]          # model of interval k+1
            tau = self.intervals[k]
            raw = seg.emission(tau) * (seg.prefix_rows(tau) @ vecs[k + 1])
            norm = raw.sum()
            if norm <= 0.0:
                raise InconsistentTimingError(k + 1, tau)
            vecs[k] = raw / norm
        self._backward_cache[k_last] = vecs
        return vecs

    def smoothed_at_transmission(self, k: int, horizon: int) -> np.ndarray:
        """Posterior of the state reported at transmission ``k``."""
        vecs = self.backward(horizon)
        if k >= len(vecs):
            raise ValueError(f"transmission {k} is after the horizon")
        raw = self.forwards[k] * vecs[k]
        norm = raw.sum()
        if norm <= 0.0:
            raise InconsistentTimingError(k, self.intervals[k - 1] if k else 0)
        return raw / norm

    def belief_at_offset(self, k: int, ell: int, horizon: int) -> np.ndarray:
        """Posterior ``ell`` steps after transmission ``k`` (interior point).

        Exact pairwise join of the segment endpoints: weight each source
        renewal state by forward mass and timing consistency, push it
        ``ell`` steps in, and tie it to the next transmission through the
        suffix operator applied to the backward vector.
        """
        k_last = self.last_index(horizon)
        if k >= k_last:
            return self._forward_only(k, ell)
        tau = self.intervals[k]
        if not 0 <= ell < tau:
            raise ValueError(f"offset {ell} outside segment of length {tau}")
        seg = self.segment_models[k]
        vecs = self.backward(horizon)
        w = self.forwards[k] * seg.emission(tau)
        raw = seg.interior_raw(w, ell, tau, vecs[k + 1])
        norm = raw.sum()
        if norm <= 0.0:
            raise InconsistentTimingError(k + 1, tau)
        return raw / norm

    def _forward_only(self, k: int, ell: int) -> np.ndarray:
        """Belief inside the open segment: blind propagation, no future."""
        seg = self.segment_models[k] if k < len(self.segment_models) else self.active
        raw = self.forwards[k] @ seg.prefix_rows(ell)
        return raw / raw.sum()

    def belief_at_time(self, horizon: int, delay: int) -> SmoothedBelief:
        """Posterior of the state at time ``horizon - delay``."""
        m = horizon - delay
        if m < 0:
            raise ValueError("horizon - delay must be nonnegative")
        k_last = self.last_index(horizon)
        times = self.times
        if m >= times[k_last]:
            belief = self._forward_only(k_last, m - times[k_last])
        else:
            k = int(np.searchsorted(np.asarray(times), m, side="right")) - 1
            if times[k] == m:
                belief = self.smoothed_at_transmission(k, horizon)
            else:
                belief = self.belief_at_offset(k, m - times[k], horizon)
        return SmoothedBelief(belief=belief, time=horizon, delay=delay)

    # -- metrics ----------------------------------------------------------

    def leakage(self, horizon: int, gap: int) -> float:
        """Best normalized certainty over the trailing opacity window."""
        if gap < 0:
            raise ValueError("gap must be nonnegative")
        h0 = math.log2(self.num_states)
        best = 0.0
        for d in range(min(gap, horizon) + 1):
            bel = self.belief_at_time(horizon, d).belief
            best = max(best, 1.0 - shannon_entropy(bel) / h0)
        return best

    def accuracy(self, n: int, gap: int, true_state: int) -> int:
        """1 if the delayed point estimate of s(n) is exact, else 0."""
        bel = self.belief_at_time(n + gap, gap).belief
        return int(int(np.argmax(bel)) + 1 == true_state)


# ---------------------------------------------------------------------------
# operation-style wrappers
# ---------------------------------------------------------------------------


def forward_update(est: EveEstimator, tau_k: int) -> EveEstimator:
    return est.observe(tau_k)


def backward_pass(est: EveEstimator, horizon_n: int) -> list[np.ndarray]:
    return est.backward(horizon_n)


def smoothed_at_transmission(est: EveEstimator, k: int, horizon_n: int) -> np.ndarray:
    return est.smoothed_at_transmission(k, horizon_n)


def belief_at_offset(est: EveEstimator, k: int, ell: int, horizon_n: int) -> np.ndarray:
    return est.belief_at_offset(k, ell, horizon_n)


def belief_at_time(est: EveEstimator, n: int, d: int) -> SmoothedBelief:
    return est.belief_at_time(n, d)


def leakage(est: EveEstimator, n: int, D: int) -> float:
    return est.leakage(n, D)


def eve_accuracy(est: EveEstimator, n: int, D: int, true_state: int) -> int:
    return est.accuracy(n, D, true_state)


def min_leakage(model: MarkovModel, plan=None,
                mu: np.ndarray | None = None) -> float:
    """Leakage floor from knowing the long-run state distribution."""
    if mu is None:
        mu = steady_state(model, plan)
    return 1.0 - shannon_entropy(mu) / math.log2(model.num_states)
