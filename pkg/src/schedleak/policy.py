"""Joint transmit/control policy optimization over the renewal statistic.

Between two updates the controller acts open-loop: its information is the
last reported state ``s`` and the elapsed time ``d`` since that report, so
a policy is, per renewal state, a stopping time ``tau`` (when to request
the next update, capped by ``t_max``) plus the action sequence applied
while waiting.  Conditional on stopping times and action sequences the
renewal states form a Markov chain, which makes exact policy evaluation a
linear solve and lets policy iteration search the full plan space:

* evaluation: per-state discounted segment reward + discounted renewal
  kernel, then ``(I - K) v = c``;
* improvement: exhaustive enumeration of candidate plans per renewal
  state against the current values (a belief tree of ``|A|**tau`` nodes),
  accepting only strict improvements.

Ties are always resolved toward the smaller stopping time, then the
lexicographically smaller action sequence, so outputs are reproducible
bit for bit.

For estimation tasks the action is a state guess that does not affect the
dynamics; the per-step reward of the best guess is the largest belief
entry and the stored "action" is that guess as a 1-indexed state label.
For control tasks actions are matrix indices and the reward is a fixed
per-state vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .markov import (MarkovModel, NumericalError, delta_belief,
                     shannon_entropy, uniform_belief)


@dataclass(frozen=True)
class PlannerConfig:
    gamma: float = 0.95
    beta: float = 1.0
    t_max: int = 10
    value_tolerance: float = 1e-9
    max_sweeps: int = 100_000

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")


@dataclass(frozen=True)
class SchedulingFunction:
    """Per-state inter-transmission interval, values in 1..t_max."""

    intervals: np.ndarray
    t_max: int

    def __post_init__(self):
        iv = np.asarray(self.intervals, dtype=np.int64)
        if np.any(iv < 1) or np.any(iv > self.t_max):
            raise ValueError("intervals must lie in 1..t_max")
        object.__setattr__(self, "intervals", iv)

    def __call__(self, state: int) -> int:
        return int(self.intervals[state - 1])


@dataclass(frozen=True)
class JointPolicy:
    """Transmit map psi(s, d) and control map pi(s, d).

    ``transmit`` has shape (S, t_max+1) over elapsed times 0..t_max with
    a forced 1 at t_max; ``control`` has shape (S, t_max) over elapsed
    times 0..t_max-1.  Control entries are action indices for control
    models and 1-indexed state guesses for estimation models.
    """

    transmit: np.ndarray
    control: np.ndarray
    t_max: int

    def __post_init__(self):
        tr = np.asarray(self.transmit, dtype=np.int64)
        ct = np.asarray(self.control, dtype=np.int64)
        if tr.shape[1] != self.t_max + 1 or ct.shape[1] != self.t_max:
            raise ValueError("transmit/control widths must be t_max+1 and t_max")
        if np.any(tr[:, self.t_max] != 1):
            raise ValueError("transmission at t_max is forced")
        object.__setattr__(self, "transmit", tr)
        object.__setattr__(self, "control", ct)


def extract_sigma(policy: JointPolicy) -> SchedulingFunction:
    """Smallest elapsed time >= 1 at which the policy transmits."""
    psi = policy.transmit[:, 1:]  # elapsed 1..t_max
    intervals = np.argmax(psi == 1, axis=1) + 1
    return SchedulingFunction(intervals=intervals, t_max=policy.t_max)


def policy_entropy(sigma: SchedulingFunction, num_states: int) -> float:
    """Entropy (bits) of the empirical distribution of interval values."""
    counts = np.bincount(sigma.intervals, minlength=sigma.t_max + 1)[1:]
    return shannon_entropy(counts / num_states)


def single_state_deviation(sigma: SchedulingFunction, s_star: int,
                           tau: int) -> SchedulingFunction:
    """Copy of sigma with state ``s_star`` (1-indexed) remapped to ``tau``."""
    if not 1 <= tau <= sigma.t_max:
        raise ValueError(f"tau {tau} outside 1..{sigma.t_max}")
    if not 1 <= s_star <= len(sigma.intervals):
        raise ValueError(f"state {s_star} out of range")
    intervals = sigma.intervals.copy()
    intervals[s_star - 1] = tau
    return SchedulingFunction(intervals=intervals, t_max=sigma.t_max)


# ---------------------------------------------------------------------------
# internal plan machinery
#
# A plan for renewal state s is (tau, actions) with len(actions) == tau for
# control models; estimation models carry actions = () and guess by MAP.
# ---------------------------------------------------------------------------


def _matrix_powers(matrix: np.ndarray, t_max: int) -> list[np.ndarray]:
    powers = [np.eye(matrix.shape[0])]
    for _ in range(t_max):
        powers.append(powers[-1] @ matrix)
    return powers


def _segment_stats(model: MarkovModel, cfg: PlannerConfig, plans,
                   powers: list[np.ndarray] | None):
    """Per-state discounted segment reward c and renewal kernel K."""
    n = model.num_states
    gam = cfg.gamma ** np.arange(cfg.t_max + 1)
    c = np.zeros(n)
    k = np.zeros((n, n))
    if model.num_actions == 1:
        maps = np.stack([p.max(axis=1) for p in powers])  # (t_max+1, S)
        for s in range(n):
            tau = plans[s][0]
            c[s] = (gam[:tau] * maps[:tau, s]).sum() - gam[tau] * cfg.beta
            k[s] = gam[tau] * powers[tau][s]
    else:
        r = model.task_reward
        for s in range(n):
            tau, actions = plans[s]
            belief = delta_belief(s + 1, n)
            total = 0.0
            for t in range(tau):
                total += gam[t] * float(belief @ r)
                belief = belief @ model.transitions[actions[t]]
            c[s] = total - gam[tau] * cfg.beta
            k[s] = gam[tau] * belief
    return c, k


def _evaluate_plans(model, cfg, plans, powers=None) -> np.ndarray:
    c, k = _segment_stats(model, cfg, plans, powers)
    return np.linalg.solve(np.eye(model.num_states) - k, c)


def _improve_estimation(model, cfg, v0, powers, allowed):
    """Best stopping time per state given values; vectorized over states."""
    n = model.num_states
    gam = cfg.gamma ** np.arange(cfg.t_max + 1)
    maps = np.stack([p.max(axis=1) for p in powers])       # (t_max+1, S)
    stop = np.stack([gam[t] * (-cfg.beta + powers[t] @ v0)
                     for t in range(cfg.t_max + 1)])       # (t_max+1, S)
    cum = np.zeros((cfg.t_max + 1, n))
    for t in range(1, cfg.t_max + 1):
        cum[t] = cum[t - 1] + gam[t - 1] * maps[t - 1]
    best_val = np.full(n, -np.inf)
    best_tau = np.ones(n, dtype=np.int64)
    for s in range(n):
        for tau in allowed[s]:
            val = cum[tau, s] + stop[tau, s]
            if val > best_val[s]:
                best_val[s] = val
                best_tau[s] = tau
    return [(int(best_tau[s]), ()) for s in range(n)], best_val


def _improve_control(model, cfg, v0, allowed, width: int | None = None):
    """Plan search per state: belief tree over action prefixes.

    With ``width=None`` the tree is exhaustive, so a sweep that finds no
    strict improvement certifies optimality against the current values.
    A finite width keeps only the most promising prefixes per depth
    (ranked by their value if stopped immediately), which is cheap enough
    to run to convergence before paying for exhaustive verification.

    Nodes at each depth are enumerated with earlier actions varying last
    (parent-major), so taking the first maximum while scanning depths in
    ascending order realizes the (smaller tau, smaller actions) rule.
    """
    n, na = model.num_states, model.num_actions
    r = model.task_reward
    stop_vec = -cfg.beta + v0
    # beliefs are row vectors: children of row z are [z @ M_a for each a]
    stacked = np.concatenate(list(model.transitions), axis=1)
    plans, best_vals = [], np.empty(n)
    for s in range(n):
        depth_cap = max(allowed[s])
        allowed_set = set(allowed[s])
        beliefs = delta_belief(s + 1, n)[None, :]
        acc = np.zeros(1)
        paths = np.zeros((1, 0), dtype=np.int8)
        best_val, best_plan = -np.inf, (1, (0,))
        for t in range(1, depth_cap + 1):
            step = cfg.gamma ** (t - 1) * (beliefs @ r)
            acc = np.repeat(acc + step, na)
            # row p*na + a is (parent p, action a): lexicographic order
            beliefs = (beliefs @ stacked).reshape(-1, n)
            paths = np.concatenate(
                [np.repeat(paths, na, axis=0),
                 np.tile(np.arange(na, dtype=np.int8), len(step))[:, None]],
                axis=1)
            vals = acc + cfg.gamma ** t * (beliefs @ stop_vec)
            if t in allowed_set:
                i = int(np.argmax(vals))
                if vals[i] > best_val:
                    best_val = float(vals[i])
                    best_plan = (t, tuple(int(a) for a in paths[i]))
            if width is not None and len(vals) > width and t < depth_cap:
                keep = np.argsort(-vals, kind="stable")[:width]
                keep.sort()
                beliefs, acc, paths = beliefs[keep], acc[keep], paths[keep]
        plans.append(best_plan)
        best_vals[s] = best_val
    return plans, best_vals


_BEAM_WIDTH = 64


def _policy_iteration(model, cfg, allowed, init_plans=None):
    """Exact policy iteration over per-renewal-state plans.

    Control models iterate with beam-limited improvement first, then an
    exhaustive sweep; only an exhaustive sweep that finds no strict
    improvement terminates, so the fixed point is optimal over the full
    plan space regardless of the beam.
    """
    n = model.num_states
    powers = _matrix_powers(model.transitions[0], cfg.t_max) \
        if model.num_actions == 1 else None
    eps = min(1e-11, cfg.value_tolerance)
    if init_plans is not None:
        plans = list(init_plans)
    elif model.num_actions == 1:
        plans = [(min(allowed[s]), ()) for s in range(n)]
    else:
        plans = [(min(allowed[s]), (0,) * min(allowed[s])) for s in range(n)]
    v0 = _evaluate_plans(model, cfg, plans, powers)
    width = _BEAM_WIDTH
    for _ in range(cfg.max_sweeps):
        if model.num_actions == 1:
            cand, vals = _improve_estimation(model, cfg, v0, powers, allowed)
            exhaustive = True
        else:
            cand, vals = _improve_control(model, cfg, v0, allowed, width=width)
            exhaustive = width is None
        accept = vals > v0 + eps
        if not accept.any():
            if exhaustive:
                return plans, v0, powers
            width = None          # beam converged; verify exhaustively
            continue
        width = _BEAM_WIDTH       # progress: resume cheap sweeps
        plans = [cand[s] if accept[s] else plans[s] for s in range(n)]
        v0 = _evaluate_plans(model, cfg, plans, powers)
    raise NumericalError(f"policy iteration exceeded {cfg.max_sweeps} sweeps")


def _map_guesses(powers, t_max: int) -> np.ndarray:
    """(S, t_max) table of 1-indexed MAP guesses, ties to the smaller state."""
    return np.stack([np.argmax(powers[t], axis=1) + 1
                     for t in range(t_max)], axis=1)


def _plans_to_policy(model, cfg, plans, powers) -> JointPolicy:
    n = model.num_states
    taus = np.array([p[0] for p in plans])
    transmit = (np.arange(cfg.t_max + 1)[None, :] >= taus[:, None]).astype(np.int64)
    transmit[:, 0] = 0
    transmit[:, cfg.t_max] = 1
    if model.num_actions == 1:
        control = _map_guesses(powers, cfg.t_max)
    else:
        control = np.zeros((n, cfg.t_max), dtype=np.int64)
        for s in range(n):
            tau, actions = plans[s]
            control[s, :tau] = actions
    return JointPolicy(transmit=transmit, control=control, t_max=cfg.t_max)


def _plans_from(sigma: SchedulingFunction, policy: JointPolicy, model):
    if model.num_actions == 1:
        return [(int(t), ()) for t in sigma.intervals]
    return [(int(t), tuple(int(a) for a in policy.control[s, :t]))
            for s, t in enumerate(sigma.intervals)]


# ---------------------------------------------------------------------------
# public solver surface
# ---------------------------------------------------------------------------


def solve_goc(model: MarkovModel, config: PlannerConfig) -> JointPolicy:
    """Jointly optimal goal-oriented transmit/control policy."""
    allowed = [range(1, config.t_max + 1)] * model.num_states
    plans, _, powers = _policy_iteration(model, config, allowed)
    return _plans_to_policy(model, config, plans, powers)


def solve_periodic(model: MarkovModel,
                   config: PlannerConfig) -> tuple[int, JointPolicy]:
    """Best fixed-period policy: re-optimizes control for every period.

    Period values that agree to within solver noise count as ties, which
    go to the smaller period.
    """
    best = None
    init = None
    for period in range(1, config.t_max + 1):
        allowed = [(period,)] * model.num_states
        plans, v0, powers = _policy_iteration(model, config, allowed, init)
        value = float(v0.mean())
        if best is None or value > best[0] + 1e-11 * max(1.0, abs(best[0])):
            best = (value, period, plans, powers)
        # warm-start the next period with one extra repeat of the last action
        init = [(period + 1, actions + actions[-1:]) if actions else (period + 1, ())
                for _, actions in plans]
    _, period, plans, powers = best
    return period, _plans_to_policy(model, config, plans, powers)


def best_control_for_sigma(model: MarkovModel, sigma: SchedulingFunction,
                           config: PlannerConfig) -> JointPolicy:
    """Re-derive the control map for a fixed transmission schedule."""
    allowed = [(int(t),) for t in sigma.intervals]
    plans, _, powers = _policy_iteration(model, config, allowed)
    return _plans_to_policy(model, config, plans, powers)


def evaluate_policy(model: MarkovModel, sigma: SchedulingFunction,
                    policy: JointPolicy, config: PlannerConfig) -> float:
    """Exact expected discounted return of (sigma, policy.control).

    Transmissions are forced at elapsed sigma(s); the start state is
    averaged uniformly, a policy-independent weighting that keeps value
    comparisons between schedules meaningful.
    """
    v0 = evaluate_policy_values(model, sigma, policy, config)
    return float(v0.mean())


def evaluate_policy_values(model: MarkovModel, sigma: SchedulingFunction,
                           policy: JointPolicy, config: PlannerConfig) -> np.ndarray:
    if sigma.t_max != config.t_max:
        raise ValueError("sigma t_max does not match planner t_max")
    powers = None
    if model.num_actions == 1:
        powers = _matrix_powers(model.transitions[0], config.t_max)
        # honor the supplied guess table rather than assuming MAP guesses
        n = model.num_states
        gam = config.gamma ** np.arange(config.t_max + 1)
        c = np.zeros(n)
        k = np.zeros((n, n))
        for s in range(n):
            tau = int(sigma.intervals[s])
            hit = np.array([powers[t][s, policy.control[s, t] - 1]
                            for t in range(tau)])
            c[s] = (gam[:tau] * hit).sum() - gam[tau] * config.beta
            k[s] = gam[tau] * powers[tau][s]
        return np.linalg.solve(np.eye(n) - k, c)
    plans = _plans_from(sigma, policy, model)
    return _evaluate_plans(model, config, plans, powers)


def occupancy_distribution(model: MarkovModel, sigma: SchedulingFunction,
                           policy: JointPolicy, tol: float = 1e-12,
                           max_iter: int = 1_000_000) -> np.ndarray:
    """Long-run distribution of the true state under a renewal policy.

    Stationary distribution nu of the renewal-state chain, then the
    time-average of the within-segment beliefs weighted by nu and segment
    lengths.
    """
    n = model.num_states
    taus = sigma.intervals
    seg_beliefs = []
    kernel = np.zeros((n, n))
    for s in range(n):
        belief = delta_belief(s + 1, n)
        rows = [belief]
        for t in range(int(taus[s])):
            a = 0 if model.num_actions == 1 else int(policy.control[s, t])
            belief = belief @ model.transitions[a]
            rows.append(belief)
        seg_beliefs.append(np.stack(rows))
        kernel[s] = belief
    nu = uniform_belief(n)
    for _ in range(max_iter):
        nxt = nu @ kernel
        if np.abs(nxt - nu).sum() < tol:
            nu = nxt / nxt.sum()
            break
        nu = nxt
    else:
        raise NumericalError("renewal-chain stationary distribution did not converge")
    occupancy = np.zeros(n)
    for s in range(n):
        occupancy += nu[s] * seg_beliefs[s][:int(taus[s])].sum(axis=0)
    return occupancy / (nu * taus).sum()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def policy_to_json(policy: JointPolicy) -> str:
    doc = {
        "t_max": policy.t_max,
        "sigma": extract_sigma(policy).intervals.tolist(),
        "psi": policy.transmit.tolist(),
        "pi": policy.control.tolist(),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def policy_from_json(text: str) -> JointPolicy:
    doc = json.loads(text)
    return JointPolicy(transmit=np.array(doc["psi"], dtype=np.int64),
                       control=np.array(doc["pi"], dtype=np.int64),
                       t_max=int(doc["t_max"]))
