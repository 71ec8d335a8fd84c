"""How cost and predictability shape the optimal request schedule.

Solves the joint transmit/control policy across a small grid of the
transmission cost beta and the decay parameter theta, then prints the
transmission probability (one over the mean interval) and the schedule
entropy.  Two regularities to look for:

* raising beta makes requests rarer, for every theta;
* the schedule entropy is the timing side-channel's capacity proxy:
  zero for a constant schedule, higher the more the interval length
  depends on the state.
"""

import numpy as np

import schedleak as sl

THETAS = [1.0, 8.0, 32.0, 128.0]
BETAS = [0.2, 0.6, 1.0, 1.4, 2.0]


def main():
    print(f"{'':>8s}" + "".join(f"  beta={b:<6g}" for b in BETAS))
    for theta in THETAS:
        model = sl.build_model(theta, 30, sl.Scenario.ESTIMATION)
        tx_cells, h_cells = [], []
        for beta in BETAS:
            planner = sl.PlannerConfig(gamma=0.95, beta=beta, t_max=10)
            sigma = sl.extract_sigma(sl.solve_goc(model, planner))
            tx_cells.append(1.0 / sigma.intervals.mean())
            h_cells.append(sl.policy_entropy(sigma, 30))
        print(f"theta={theta:<4g}" + "".join(f"  {t:>6.2f} tx" for t in tx_cells))
        print(f"{'':>8s}" + "".join(f"  {h:>6.2f} H " for h in h_cells))
    print()
    print("tx = transmission probability (1 / mean interval), "
          "H = schedule entropy in bits")


if __name__ == "__main__":
    main()
