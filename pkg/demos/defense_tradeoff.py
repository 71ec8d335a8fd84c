"""The privacy/performance frontier of the two defenses, at desk scale.

Sweeps the hysteresis thresholds and the packing targets at the standard
operating point with a handful of episodes per point (bump N_EPISODES
for smoother curves), prints the operating points, and marks which ones
survive the dominance filter.
"""

import schedleak as sl

N_EPISODES = 8


def main():
    base = sl.EpisodeConfig(scenario=sl.Scenario.ESTIMATION, theta=32.0,
                            beta=1.0, d_gap=5, n_steps=200, seed=7,
                            policy_kind=sl.PolicyKind.MPI)
    print("solving the cell ...")
    cell = sl.CellSolution(base)
    rows = sl.pareto_sweep(base,
                           ade_lows=[0.1, 0.3, 0.5, 0.7],
                           pde_fractions=[0.0, 0.25, 0.5, 0.75, 1.0],
                           n_episodes=N_EPISODES, solution=cell)
    kept = {id(r) for r in sl.pareto_filter(rows)}
    print(f"\n{'policy':8s} {'param':>6s} {'leakage':>8s} {'reward':>8s}  frontier?")
    for r in rows:
        tag = "*" if id(r) in kept else ""
        param = "-" if r["param"] is None else f"{r['param']:g}"
        print(f"{r['defense']:8s} {param:>6s} {r['mean_leakage']:8.3f} "
              f"{r['mean_total_reward']:8.3f}  {tag}")
    print("\n(*) not dominated in (lower leakage, higher reward)")


if __name__ == "__main__":
    main()
