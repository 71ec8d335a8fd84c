"""Leakage countermeasures: hysteresis mode switching and entropy packing.

The alternating defense (ADE) runs online: at every renewal the scheduler
forecasts what the listener's certainty will be at the next request
instant, switches to the fixed-period schedule when that forecast crosses
an upper threshold, and back to the goal-oriented schedule when it falls
below a lower threshold.  The forecast is forward-only (a flat backward
boundary): at decision time no future observations exist, but the sender
controls the timing, so the listener's forward state is computable
exactly.

The packing defense (PDE) runs offline: starting from the goal-oriented
schedule it repeatedly applies the single-state deviation that lowers the
schedule entropy while costing the least reward, until a target entropy
is reached.  Its output is a plain schedule, usable as a lookup table.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .eavesdropper import EveEstimator, SegmentModel
from .markov import MarkovModel
from .policy import (JointPolicy, PlannerConfig, SchedulingFunction,
                     _matrix_powers, _policy_iteration, _plans_from,
                     policy_entropy, single_state_deviation)


class DefenseMode(Enum):
    GOC = "goc"
    PERIODIC = "periodic"


@dataclass
class AdeState:
    """Mode flag, hysteresis band and the fallback period.

    ``goc_segment``/``pp_segment`` are the listener-side models of the two
    regimes, used to forecast leakage under each hypothesis.
    """

    mode: DefenseMode
    l_low: float
    l_high: float
    period: int
    goc_segment: SegmentModel | None = None
    pp_segment: SegmentModel | None = None

    def __post_init__(self):
        if not self.l_low < self.l_high:
            raise ValueError("need l_low < l_high")


@dataclass(frozen=True)
class PdeConfig:
    target_entropy: float
    t_max: int

    def __post_init__(self):
        if self.target_entropy < 0:
            raise ValueError("target entropy must be nonnegative")


def forecast_leakage(est: EveEstimator, planned_interval: int, D: int,
                     segment_model: SegmentModel | None = None,
                     mode: str = "instant") -> float:
    """Leakage the listener would reach if the next interval were as planned.

    Simulates appending the interval to the timing trace and evaluates
    leakage at the anticipated next request instant (``mode="instant"``)
    or its maximum over every step of the hypothetical segment
    (``mode="interval_max"``).
    """
    probe = est.clone()
    if segment_model is not None:
        probe.set_active(segment_model)
    probe.observe(planned_interval)
    arrival = probe.times[-1]
    if mode == "instant":
        return probe.leakage(arrival, D)
    if mode == "interval_max":
        start = probe.times[-2] + 1
        return max(probe.leakage(h, D) for h in range(start, arrival + 1))
    raise ValueError(f"unknown forecast mode {mode!r}")


def ade_decide(mode: DefenseMode, forecast: float, ade: AdeState,
               sigma_s: int) -> tuple[int, DefenseMode]:
    """Pure hysteresis rule given the forecast for the active mode."""
    if mode is DefenseMode.GOC:
        if forecast >= ade.l_high:
            return ade.period, DefenseMode.PERIODIC
        return sigma_s, DefenseMode.GOC
    if forecast < ade.l_low:
        return sigma_s, DefenseMode.GOC
    return ade.period, DefenseMode.PERIODIC


def ade_schedule(s: int, ade: AdeState, sigma: SchedulingFunction,
                 est: EveEstimator, D: int,
                 forecast_mode: str = "instant") -> tuple[int, DefenseMode]:
    """Next interval and mode for a renewal at state ``s`` (1-indexed).

    In goal-oriented mode the forecast hypothesizes the goal-oriented
    interval sigma(s); in periodic mode it hypothesizes the period.  The
    mode the interval is scheduled under determines which schedule the
    listener should assume for it.
    """
    if ade.mode is DefenseMode.GOC:
        fc = forecast_leakage(est, sigma(s), D, ade.goc_segment, forecast_mode)
    else:
        fc = forecast_leakage(est, ade.period, D, ade.pp_segment, forecast_mode)
    interval, new_mode = ade_decide(ade.mode, fc, ade, sigma(s))
    ade.mode = new_mode
    return interval, new_mode


# ---------------------------------------------------------------------------
# packing defense
# ---------------------------------------------------------------------------


class _EstimationScorer:
    """Exact candidate evaluation for guess tasks.

    Per-state segment rewards and renewal kernels are precomputed for
    every stopping time, so scoring a single-state deviation is one
    row swap plus a linear solve.
    """

    def __init__(self, model: MarkovModel, cfg: PlannerConfig,
                 intervals: np.ndarray):
        self.n = model.num_states
        self.cfg = cfg
        powers = _matrix_powers(model.transitions[0], cfg.t_max)
        gam = cfg.gamma ** np.arange(cfg.t_max + 1)
        maps = np.stack([p.max(axis=1) for p in powers])        # (t+1, S)
        cum = np.cumsum(
            np.vstack([np.zeros(self.n), gam[:-1, None] * maps[:-1]]), axis=0)
        self.c_of_tau = cum - gam[:, None] * cfg.beta           # (t+1, S)
        self.krows = np.stack([gam[t] * powers[t] for t in range(cfg.t_max + 1)])
        self.refresh(intervals)

    def refresh(self, intervals: np.ndarray) -> None:
        idx = np.arange(self.n)
        self._c = self.c_of_tau[intervals, idx]
        self._k = self.krows[intervals, idx, :]

    def score_deviation(self, s_idx: int, tau: int) -> float:
        c = self._c.copy()
        k = self._k.copy()
        c[s_idx] = self.c_of_tau[tau, s_idx]
        k[s_idx] = self.krows[tau, s_idx]
        v0 = np.linalg.solve(np.eye(self.n) - k, c)
        return float(v0.mean())


class _ControlScorer:
    """Candidate evaluation with the control plan adapted to the schedule.

    Scanning hundreds of candidates per packing step makes a full control
    re-optimization per candidate impractical; candidates are scored with
    the incumbent plans, adapting only the deviated state's plan (prefix
    truncation, or a greedy stop-value extension) and swapping that one
    row of the evaluation system.  After a deviation is accepted the
    control maps are re-optimized exactly for the new schedule, so the
    incumbent plans stay tight.
    """

    def __init__(self, model: MarkovModel, cfg: PlannerConfig,
                 intervals: np.ndarray, policy: JointPolicy):
        self.model = model
        self.cfg = cfg
        self.gam = cfg.gamma ** np.arange(cfg.t_max + 1)
        sigma = SchedulingFunction(intervals=intervals, t_max=cfg.t_max)
        self.plans = _plans_from(sigma, policy, model)
        self._rebuild()

    def _rebuild(self):
        from .policy import _segment_stats
        self._c, self._k = _segment_stats(self.model, self.cfg, self.plans, None)
        self.v0 = np.linalg.solve(np.eye(self.model.num_states) - self._k, self._c)

    def _adapt(self, s: int, tau: int):
        old_tau, actions = self.plans[s]
        if tau <= old_tau:
            return tau, actions[:tau]
        actions = list(actions)
        stop_vec = -self.cfg.beta + self.v0
        belief = np.zeros(self.model.num_states)
        belief[s] = 1.0
        for a in actions:
            belief = belief @ self.model.transitions[a]
        for _ in range(old_tau, tau):
            scores = [float((belief @ m) @ stop_vec) for m in self.model.transitions]
            a = int(np.argmax(scores))
            actions.append(a)
            belief = belief @ self.model.transitions[a]
        return tau, tuple(actions)

    def score_deviation(self, s_idx: int, tau: int) -> float:
        plan = self._adapt(s_idx, tau)
        r = self.model.task_reward
        belief = np.zeros(self.model.num_states)
        belief[s_idx] = 1.0
        total = 0.0
        for t in range(tau):
            total += self.gam[t] * float(belief @ r)
            belief = belief @ self.model.transitions[plan[1][t]]
        c = self._c.copy()
        k = self._k.copy()
        c[s_idx] = total - self.gam[tau] * self.cfg.beta
        k[s_idx] = self.gam[tau] * belief
        v0 = np.linalg.solve(np.eye(self.model.num_states) - k, c)
        return float(v0.mean())

    def refresh(self, intervals: np.ndarray) -> None:
        allowed = [(int(t),) for t in intervals]
        self.plans, _, _ = _policy_iteration(self.model, self.cfg, allowed)
        self._rebuild()


def pde_packing_steps(sigma0: SchedulingFunction, model: MarkovModel,
                      planner: PlannerConfig,
                      target_entropy: float = 0.0) -> list[tuple[SchedulingFunction, float]]:
    """Accepted packing deviations, in order, down to the target entropy.

    Each step applies the reward-best single-state deviation among those
    that strictly lower the schedule entropy; candidates are scanned in
    ascending (state, interval) order and the first maximum is kept.
    Returns [(schedule, entropy)] starting with the input schedule.
    """
    n = model.num_states
    if model.num_actions == 1:
        scorer = _EstimationScorer(model, planner, sigma0.intervals)
    else:
        from .policy import best_control_for_sigma
        policy = best_control_for_sigma(model, sigma0, planner)
        scorer = _ControlScorer(model, planner, sigma0.intervals, policy)
    current = sigma0
    h = policy_entropy(current, n)
    steps = [(current, h)]
    while h > target_entropy:
        best = None
        for s_star in range(1, n + 1):
            for tau in range(1, planner.t_max + 1):
                if tau == current(s_star):
                    continue
                cand = single_state_deviation(current, s_star, tau)
                h_cand = policy_entropy(cand, n)
                if h_cand >= h:
                    continue
                score = scorer.score_deviation(s_star - 1, tau)
                if best is None or score > best[0]:
                    best = (score, cand, h_cand)
        if best is None:
            break
        _, current, h = best
        scorer.refresh(current.intervals)
        steps.append((current, h))
    return steps


def pack_pde(sigma0: SchedulingFunction, cfg: PdeConfig, model: MarkovModel,
             planner: PlannerConfig) -> SchedulingFunction:
    """Entropy-packed schedule: stop once entropy reaches the target."""
    if policy_entropy(sigma0, model.num_states) <= cfg.target_entropy:
        return sigma0
    steps = pde_packing_steps(sigma0, model, planner, cfg.target_entropy)
    return steps[-1][0]


def weighted_performance(records, epsilon: float, D: int | None = None) -> float:
    """Sum over steps of total reward minus ``epsilon`` times leakage.

    ``records`` is either an episode record (with ``total_rewards`` and
    ``leakages`` arrays, leakage computed at its own opacity gap) or an
    iterable of (reward, leakage) pairs.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if hasattr(records, "total_rewards"):
        if D is not None and getattr(records, "d_gap", D) != D:
            raise ValueError("record leakage was computed at a different gap")
        rewards = np.asarray(records.total_rewards, dtype=float)
        leak = np.asarray(records.leakages, dtype=float)
    else:
        pairs = list(records)
        rewards = np.array([p[0] for p in pairs], dtype=float)
        leak = np.array([p[1] for p in pairs], dtype=float)
    return float(rewards.sum() - epsilon * leak.sum())
