"""Independent brute-force oracles for the test suite.

These deliberately share no smoothing/solver code with the package: the
posterior oracle enumerates complete state trajectories and filters them
by timing consistency; the policy oracle enumerates complete joint
policies and evaluates each by linear solve; the return oracle is a
seeded Monte-Carlo rollout.
"""

from __future__ import annotations

import itertools

import numpy as np


def enum_posteriors(transitions: np.ndarray, prior: np.ndarray,
                    segments: list[tuple[int, np.ndarray, np.ndarray | None]],
                    open_segment: tuple[np.ndarray, np.ndarray | None],
                    horizon: int) -> np.ndarray:
    """Exact posteriors at every time 0..horizon by path enumeration.

    ``segments`` lists the completed intervals as (tau, schedule vector,
    per-state action table or None); ``open_segment`` is the (schedule,
    actions) pair in force after the last transmission.  Transmissions
    happen at times 0, tau_1, tau_1+tau_2, ...; consistency requires the
    state at each transmission to schedule exactly the interval that
    followed.  No condition is imposed on the open segment (the absence
    of further traffic is not informative in this model).  Returns an
    array of shape (horizon+1, S).
    """
    n = transitions.shape[1]
    t_marks = [0]
    for tau, _, _ in segments:
        t_marks.append(t_marks[-1] + tau)
    horizon = max(horizon, t_marks[-1])
    paths = np.array(list(itertools.product(range(n), repeat=horizon + 1)),
                     dtype=np.int64)
    w = prior[paths[:, 0]].astype(float).copy()
    for t in range(horizon):
        seg = np.searchsorted(np.asarray(t_marks), t, side="right") - 1
        if seg < len(segments):
            _, _, plan = segments[seg]
        else:
            _, plan = open_segment
        renewal = paths[:, t_marks[seg]]
        offset = t - t_marks[seg]
        if plan is None:
            actions = np.zeros(len(paths), dtype=np.int64)
        else:
            actions = plan[renewal, offset]
        w *= transitions[actions, paths[:, t], paths[:, t + 1]]
    for j, (tau, taus_vec, _) in enumerate(segments):
        w *= taus_vec[paths[:, t_marks[j]]] == tau
    total = w.sum()
    if total <= 0:
        raise ValueError("no consistent trajectory")
    out = np.empty((horizon + 1, n))
    for m in range(horizon + 1):
        out[m] = np.bincount(paths[:, m], weights=w, minlength=n) / total
    return out


def enum_posterior(transitions, prior, segments, open_segment, m):
    """Single-time wrapper around :func:`enum_posteriors`."""
    return enum_posteriors(transitions, prior, segments, open_segment, m)[m]


def random_stochastic(rng: np.random.Generator, num_actions: int,
                      num_states: int, sparse: bool = False) -> np.ndarray:
    """Random row-stochastic transition tensor, optionally sparsified."""
    t = rng.dirichlet(np.ones(num_states), size=(num_actions, num_states))
    if sparse:
        mask = rng.random((num_actions, num_states, num_states)) < 0.5
        mask[:, :, 0] = True  # keep rows nonzero
        t = t * mask
        t = t / t.sum(axis=2, keepdims=True)
    return t


def enumerate_joint_policies(num_states: int, num_actions: int, t_max: int):
    """All (tau, action sequence) plans per state, as a cartesian iterator."""
    per_state = []
    for tau in range(1, t_max + 1):
        for actions in itertools.product(range(num_actions), repeat=tau):
            per_state.append((tau, actions))
    return itertools.product(per_state, repeat=num_states)


def evaluate_joint(transitions: np.ndarray, reward_vec: np.ndarray | None,
                   plans, gamma: float, beta: float) -> np.ndarray:
    """Exact renewal values of one joint plan assignment (linear solve).

    ``reward_vec`` None means the guess task: per-step reward is the
    largest belief entry.
    """
    n = transitions.shape[1]
    c = np.zeros(n)
    k = np.zeros((n, n))
    for s, (tau, actions) in enumerate(plans):
        belief = np.zeros(n)
        belief[s] = 1.0
        total = 0.0
        for t in range(tau):
            step = belief.max() if reward_vec is None else float(belief @ reward_vec)
            total += gamma ** t * step
            belief = belief @ transitions[actions[t]]
        c[s] = total - gamma ** tau * beta
        k[s] = gamma ** tau * belief
    return np.linalg.solve(np.eye(n) - k, c)


def brute_force_best(transitions: np.ndarray, reward_vec: np.ndarray | None,
                     gamma: float, beta: float, t_max: int) -> np.ndarray:
    """Optimal renewal values over all joint policies (exhaustive)."""
    num_actions, n = transitions.shape[0], transitions.shape[1]
    best = None
    for plans in enumerate_joint_policies(n, num_actions, t_max):
        v = evaluate_joint(transitions, reward_vec, plans, gamma, beta)
        if best is None:
            best = v
        else:
            best = np.maximum(best, v)
    return best


def monte_carlo_return(transitions: np.ndarray, reward_vec: np.ndarray | None,
                       intervals: np.ndarray, control: np.ndarray | None,
                       gamma: float, beta: float, n_episodes: int,
                       horizon: int, seed: int) -> tuple[float, float]:
    """Seeded rollout estimate of the uniform-start discounted return.

    ``control`` rows hold 1-indexed guesses when ``reward_vec`` is None,
    action indices otherwise.  Returns (mean, standard error).
    """
    rng = np.random.default_rng(seed)
    n = transitions.shape[1]
    totals = np.zeros(n_episodes)
    for ep in range(n_episodes):
        s = int(rng.integers(n))
        last, elapsed = s, 0
        disc = 1.0
        value = 0.0
        for _ in range(horizon):
            if elapsed == int(intervals[last]):
                last, elapsed = s, 0
                value -= disc * beta
            if reward_vec is None:
                guess = int(control[last, elapsed]) - 1
                value += disc * (1.0 if guess == s else 0.0)
                a = 0
            else:
                a = int(control[last, elapsed]) if control is not None else 0
                value += disc * reward_vec[s]
            s = int(rng.choice(n, p=transitions[a, s]))
            elapsed += 1
            disc *= gamma
        totals[ep] = value
    return float(totals.mean()), float(totals.std(ddof=1) / np.sqrt(n_episodes))
