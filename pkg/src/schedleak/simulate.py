"""Deterministic episode execution and experiment sweeps.

An episode couples three actors: the process (advanced by a seeded
generator), the scheduler/controller (driving requests and actions off
the last reported state and elapsed time), and the listener (fed every
realized interval).  Per-step logs capture state, action, request flag,
rewards, leakage and the listener's delayed hit/miss; aggregates carry
means with standard errors.

Reproducibility: the stream for episode ``i`` under master seed ``m`` is
``numpy.random.default_rng([m, i])`` (seed-sequence splitting), so any
row of any sweep can be regenerated in isolation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import defenses, eavesdropper, markov, policy
from .defenses import AdeState, DefenseMode
from .eavesdropper import EveEstimator, SegmentModel
from .markov import Scenario
from .policy import PlannerConfig

CSV_COLUMNS = ["n", "s", "a", "c", "r_task", "r_comm", "leakage", "eve_hit", "mode"]


class PolicyKind(Enum):
    MPI = "MPI"
    PP = "PP"
    ADE = "ADE"
    PDE = "PDE"


@dataclass(frozen=True)
class EpisodeConfig:
    scenario: Scenario = Scenario.ESTIMATION
    theta: float = 32.0
    beta: float = 1.0
    gamma: float = 0.95
    t_max: int = 10
    d_gap: int = 5
    n_steps: int = 200
    seed: int = 0
    policy_kind: PolicyKind = PolicyKind.MPI
    num_states: int = 30
    l_low: float = 0.4
    l_high: float = 0.6
    target_entropy_fraction: float = 0.5
    epsilon: float = 0.0
    value_tolerance: float = 1e-9
    forecast_mode: str = "interval_max"

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.d_gap < 0:
            raise ValueError("d_gap must be nonnegative")
        if self.forecast_mode not in ("instant", "interval_max"):
            raise ValueError(f"unknown forecast mode {self.forecast_mode!r}")
        self.planner()  # validate planner parameters eagerly

    def planner(self) -> PlannerConfig:
        return PlannerConfig(gamma=self.gamma, beta=self.beta, t_max=self.t_max,
                             value_tolerance=self.value_tolerance)


@dataclass
class EpisodeRecord:
    """Per-step log of one episode; arrays all have length n_steps."""

    states: np.ndarray
    actions: np.ndarray
    transmits: np.ndarray
    task_rewards: np.ndarray
    comm_rewards: np.ndarray
    leakages: np.ndarray
    eve_hits: np.ndarray
    eve_hit_truncated: np.ndarray
    modes: list[str]
    d_gap: int
    epsilon: float

    @property
    def total_rewards(self) -> np.ndarray:
        return self.task_rewards + self.comm_rewards

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for n in range(len(self.states)):
            writer.writerow([
                n, int(self.states[n]), int(self.actions[n]),
                int(self.transmits[n]),
                repr(float(self.task_rewards[n])),
                repr(float(self.comm_rewards[n])),
                repr(float(self.leakages[n])),
                int(self.eve_hits[n]), self.modes[n],
            ])


@dataclass(frozen=True)
class EpisodeMetrics:
    mean_leakage: float
    mean_total_reward: float
    mean_task_reward: float
    eve_accuracy: float
    transmission_probability: float
    weighted_performance: float

    def to_dict(self) -> dict:
        return {
            "mean_leakage": self.mean_leakage,
            "mean_total_reward": self.mean_total_reward,
            "mean_task_reward": self.mean_task_reward,
            "eve_accuracy": self.eve_accuracy,
            "transmission_probability": self.transmission_probability,
            "weighted_performance": self.weighted_performance,
        }


@dataclass(frozen=True)
class BatchMetrics:
    """Across-episode means and standard errors of the mean."""

    means: EpisodeMetrics
    stderrs: dict
    n_episodes: int

    def to_dict(self) -> dict:
        doc = self.means.to_dict()
        doc.update({f"se_{k}": v for k, v in self.stderrs.items()})
        doc["n_episodes"] = self.n_episodes
        return doc


class CellSolution:
    """Solved policies and listener models for one (scenario, theta, beta).

    Everything here is deterministic given the configuration, so a cell
    can be solved once and shared across episodes, gap values and defense
    parameters.
    """

    def __init__(self, cfg: EpisodeConfig):
        self.scenario = cfg.scenario
        self.model = markov.build_model(cfg.theta, cfg.num_states, cfg.scenario)
        self.planner = cfg.planner()
        self.goc = policy.solve_goc(self.model, self.planner)
        self.sigma_goc = policy.extract_sigma(self.goc)
        self.pp_period, self.pp_policy = policy.solve_periodic(self.model, self.planner)
        self.seg_goc = SegmentModel.goal_oriented(self.model, self.sigma_goc, self.goc)
        self.seg_pp = SegmentModel.periodic(self.model, self.pp_period,
                                            self.planner.t_max, self.pp_policy)
        self._pde_steps = None
        self._pde_cache: dict[float, tuple] = {}

    def goc_value(self) -> float:
        return policy.evaluate_policy(self.model, self.sigma_goc, self.goc, self.planner)

    def pp_value(self) -> float:
        sigma_pp = policy.extract_sigma(self.pp_policy)
        return policy.evaluate_policy(self.model, sigma_pp, self.pp_policy, self.planner)

    def pde_steps(self):
        if self._pde_steps is None:
            self._pde_steps = defenses.pde_packing_steps(
                self.sigma_goc, self.model, self.planner, target_entropy=0.0)
        return self._pde_steps

    def pde(self, fraction: float):
        """(sigma, policy, segment model) packed to fraction * H(sigma_goc)."""
        key = round(float(fraction), 12)
        if key not in self._pde_cache:
            h0 = policy.policy_entropy(self.sigma_goc, self.model.num_states)
            target = fraction * h0
            sigma_pde = self.sigma_goc
            for sig, h in self.pde_steps():
                sigma_pde = sig
                if h <= target:
                    break
            if self.model.num_actions == 1:
                t_max = self.planner.t_max
                transmit = (np.arange(t_max + 1)[None, :]
                            >= sigma_pde.intervals[:, None]).astype(np.int64)
                transmit[:, 0] = 0
                transmit[:, t_max] = 1
                jp = policy.JointPolicy(transmit=transmit,
                                        control=self.goc.control, t_max=t_max)
            else:
                jp = policy.best_control_for_sigma(self.model, sigma_pde, self.planner)
            seg = SegmentModel.goal_oriented(self.model, sigma_pde, jp)
            self._pde_cache[key] = (sigma_pde, jp, seg)
        return self._pde_cache[key]

    def occupancy(self, kind: PolicyKind, fraction: float = 0.5) -> np.ndarray:
        """Long-run true-state distribution under a policy kind."""
        if self.model.num_actions == 1:
            return markov.steady_state(self.model)
        if kind is PolicyKind.PP:
            sigma = policy.extract_sigma(self.pp_policy)
            return policy.occupancy_distribution(self.model, sigma, self.pp_policy)
        if kind is PolicyKind.PDE:
            sigma_pde, jp, _ = self.pde(fraction)
            return policy.occupancy_distribution(self.model, sigma_pde, jp)
        return policy.occupancy_distribution(self.model, self.sigma_goc, self.goc)


def run_episode(cfg: EpisodeConfig, solution: CellSolution | None = None,
                episode_index: int = 0) -> tuple[EpisodeRecord, EpisodeMetrics]:
    """Simulate one seeded episode under the configured policy kind."""
    sol = solution if solution is not None else CellSolution(cfg)
    model, n_states = sol.model, sol.model.num_states
    n_steps, gap = cfg.n_steps, cfg.d_gap
    kind = cfg.policy_kind
    rng = np.random.default_rng([cfg.seed, episode_index])
    cum = np.cumsum(model.transitions, axis=2)

    mu0 = sol.occupancy(kind, cfg.target_entropy_fraction)
    if kind is PolicyKind.PDE:
        sigma_pde, jp_pde, seg_pde = sol.pde(cfg.target_entropy_fraction)
    ade = None
    if kind is PolicyKind.ADE:
        ade = AdeState(mode=DefenseMode.GOC, l_low=cfg.l_low, l_high=cfg.l_high,
                       period=sol.pp_period, goc_segment=sol.seg_goc,
                       pp_segment=sol.seg_pp)

    est = EveEstimator(model, active=sol.seg_goc, prior=mu0)

    states = np.zeros(n_steps, dtype=np.int64)
    actions = np.zeros(n_steps, dtype=np.int64)
    transmits = np.zeros(n_steps, dtype=np.int64)
    task_rewards = np.zeros(n_steps)
    leakages = np.zeros(n_steps)
    modes: list[str] = [""] * n_steps

    def draw(cdf_row) -> int:
        return int(min(np.searchsorted(cdf_row, rng.random(), side="right"),
                       n_states - 1))

    s = draw(np.cumsum(mu0))  # 0-indexed true state
    next_tx = 0
    control_row = None
    interval = None
    last_tx = 0
    for n in range(n_steps):
        if n == next_tx:
            if n > 0:
                est.observe(interval)
            s_rep = s + 1
            if kind is PolicyKind.MPI:
                interval, seg, control_row = (sol.sigma_goc(s_rep), sol.seg_goc,
                                              sol.goc.control[s])
                modes_label = "goc"
            elif kind is PolicyKind.PP:
                interval, seg, control_row = (sol.pp_period, sol.seg_pp,
                                              sol.pp_policy.control[s])
                modes_label = "periodic"
            elif kind is PolicyKind.PDE:
                interval, seg, control_row = (sigma_pde(s_rep), seg_pde,
                                              jp_pde.control[s])
                modes_label = "goc"
            else:
                interval, mode = defenses.ade_schedule(
                    s_rep, ade, sol.sigma_goc, est, gap,
                    forecast_mode=cfg.forecast_mode)
                if mode is DefenseMode.GOC:
                    seg, control_row = sol.seg_goc, sol.goc.control[s]
                    modes_label = "goc"
                else:
                    seg, control_row = sol.seg_pp, sol.pp_policy.control[s]
                    modes_label = "periodic"
            est.set_active(seg)
            transmits[n] = 1
            last_tx = n
            next_tx = n + interval
        states[n] = s + 1
        a = int(control_row[n - last_tx])
        actions[n] = a
        if model.num_actions == 1:
            task_rewards[n] = 1.0 if a == s + 1 else 0.0
        else:
            task_rewards[n] = model.task_reward[s]
        leakages[n] = est.leakage(n, gap)
        modes[n] = modes_label
        matrix_index = 0 if model.num_actions == 1 else a
        s = draw(cum[matrix_index, s])

    comm_rewards = -cfg.beta * transmits.astype(float)
    eve_hits = np.zeros(n_steps, dtype=np.int64)
    truncated = np.zeros(n_steps, dtype=bool)
    for n in range(n_steps):
        horizon = min(n + gap, n_steps - 1)
        truncated[n] = n + gap > n_steps - 1
        bel = est.belief_at_time(horizon, horizon - n).belief
        eve_hits[n] = int(int(np.argmax(bel)) + 1 == states[n])

    record = EpisodeRecord(states=states, actions=actions, transmits=transmits,
                           task_rewards=task_rewards, comm_rewards=comm_rewards,
                           leakages=leakages, eve_hits=eve_hits,
                           eve_hit_truncated=truncated, modes=modes,
                           d_gap=gap, epsilon=cfg.epsilon)
    metrics = EpisodeMetrics(
        mean_leakage=float(leakages.mean()),
        mean_total_reward=float(record.total_rewards.mean()),
        mean_task_reward=float(task_rewards.mean()),
        eve_accuracy=float(eve_hits.mean()),
        transmission_probability=float(transmits.mean()),
        weighted_performance=defenses.weighted_performance(record, cfg.epsilon, gap),
    )
    return record, metrics


def run_batch(cfg: EpisodeConfig, n_episodes: int,
              solution: CellSolution | None = None) -> BatchMetrics:
    """Aggregate metrics over deterministically seeded episodes."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    sol = solution if solution is not None else CellSolution(cfg)
    episodes = [run_episode(cfg, sol, episode_index=i)[1] for i in range(n_episodes)]
    return aggregate(episodes)


def aggregate(episodes: list[EpisodeMetrics]) -> BatchMetrics:
    names = list(episodes[0].to_dict())
    table = {k: np.array([e.to_dict()[k] for e in episodes]) for k in names}
    means = EpisodeMetrics(**{k: float(v.mean()) for k, v in table.items()})
    n = len(episodes)
    stderrs = {k: (float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0)
               for k, v in table.items()}
    return BatchMetrics(means=means, stderrs=stderrs, n_episodes=n)


def _cell_config(base: EpisodeConfig, **overrides) -> EpisodeConfig:
    doc = {k: getattr(base, k) for k in EpisodeConfig.__dataclass_fields__}
    doc.update(overrides)
    return EpisodeConfig(**doc)


def sweep(base: EpisodeConfig, thetas, betas, d_gaps, kinds,
          n_episodes: int, solutions: dict | None = None) -> list[dict]:
    """One aggregated row per (theta, beta, d_gap, policy kind) cell.

    Policies are solved once per (theta, beta) and shared across rows;
    failures are recorded in-row and the sweep continues.
    """
    solutions = solutions if solutions is not None else {}
    rows = []
    for theta in thetas:
        for beta in betas:
            key = (base.scenario.value, float(theta), float(beta))
            try:
                if key not in solutions:
                    solutions[key] = CellSolution(
                        _cell_config(base, theta=theta, beta=beta))
                sol = solutions[key]
            except Exception as exc:  # noqa: BLE001 - per-cell fault isolation
                for d in d_gaps:
                    for kind in kinds:
                        rows.append({"scenario": base.scenario.value,
                                     "theta": theta, "beta": beta, "d_gap": d,
                                     "policy": PolicyKind(kind).value,
                                     "error": f"{type(exc).__name__}: {exc}"})
                continue
            for d in d_gaps:
                for kind in kinds:
                    kind = PolicyKind(kind)
                    cfg = _cell_config(base, theta=theta, beta=beta, d_gap=d,
                                       policy_kind=kind)
                    row = {"scenario": base.scenario.value, "theta": theta,
                           "beta": beta, "d_gap": d, "policy": kind.value}
                    try:
                        batch = run_batch(cfg, n_episodes, sol)
                        row.update(batch.to_dict())
                        row["policy_entropy"] = _kind_entropy(sol, kind, cfg)
                        row["min_leakage"] = eavesdropper.min_leakage(
                            sol.model, mu=sol.occupancy(kind, cfg.target_entropy_fraction))
                    except Exception as exc:  # noqa: BLE001
                        row["error"] = f"{type(exc).__name__}: {exc}"
                    rows.append(row)
    return rows


def _kind_entropy(sol: CellSolution, kind: PolicyKind, cfg: EpisodeConfig) -> float:
    n = sol.model.num_states
    if kind is PolicyKind.MPI:
        return policy.policy_entropy(sol.sigma_goc, n)
    if kind is PolicyKind.PP:
        return 0.0
    if kind is PolicyKind.PDE:
        return policy.policy_entropy(sol.pde(cfg.target_entropy_fraction)[0], n)
    return float("nan")  # ADE alternates; its schedule has no fixed entropy


def pareto_sweep(base: EpisodeConfig, ade_lows, pde_fractions,
                 n_episodes: int, solution: CellSolution | None = None) -> list[dict]:
    """Leakage/reward operating points for both defenses plus anchors.

    ADE points vary the lower threshold with a fixed 0.2 hysteresis band;
    packing points vary the target entropy as a fraction of the
    goal-oriented schedule entropy.
    """
    sol = solution if solution is not None else CellSolution(base)
    rows = []

    def add(kind: PolicyKind, param: float | None, **overrides):
        cfg = _cell_config(base, policy_kind=kind, **overrides)
        row = {"defense": kind.value, "param": param}
        try:
            batch = run_batch(cfg, n_episodes, sol)
            row.update(batch.to_dict())
        except Exception as exc:  # noqa: BLE001
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)

    add(PolicyKind.MPI, None)
    add(PolicyKind.PP, None)
    for low in ade_lows:
        add(PolicyKind.ADE, float(low), l_low=float(low), l_high=float(low) + 0.2)
    for frac in pde_fractions:
        add(PolicyKind.PDE, float(frac), target_entropy_fraction=float(frac))
    return rows


def pareto_filter(rows: list[dict]) -> list[dict]:
    """Keep points not dominated in (lower leakage, higher reward)."""
    ok = [r for r in rows if "error" not in r]
    kept = []
    for r in ok:
        dominated = any(
            o is not r
            and o["mean_leakage"] <= r["mean_leakage"]
            and o["mean_total_reward"] >= r["mean_total_reward"]
            and (o["mean_leakage"] < r["mean_leakage"]
                 or o["mean_total_reward"] > r["mean_total_reward"])
            for o in ok)
        if not dominated:
            kept.append(r)
    return kept


def rows_to_csv(rows: list[dict]) -> str:
    """Render sweep rows as CSV with a stable union-of-keys header."""
    fields = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()
