# %%
"""
Designing thresholds from an information budget.

The scheduler statistics tie the innovation threshold to four numbers:
how often the high-power path fires, how much a silent slot still
shrinks the covariance, and the resulting per-slot information rate.
The rate decreases monotonically from 1 (threshold 0, always high
power) down to the bare channel arrival probability, so experiments can
be specified by rate and solved back to a threshold.

This script tabulates the map for several channel qualities and
demonstrates the round trip used by the `solve-threshold` subcommand.
"""

import numpy as np

from schedkf import component_stats, threshold_for_rate


def main():
    print(f"{'threshold':>10} {'high rate':>10} {'drop shrink':>12} "
          f"{'rate b=0.3':>11} {'rate b=0.6':>11} {'rate b=0.9':>11}")
    for th in (0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0):
        row = [component_stats(th, b) for b in (0.3, 0.6, 0.9)]
        print(f"{th:10.2f} {row[0].high_rate:10.4f} "
              f"{row[0].drop_shrink:12.4f} "
              f"{row[0].info_rate:11.4f} {row[1].info_rate:11.4f} "
              f"{row[2].info_rate:11.4f}")

    print("\ninverting a rate budget (arrival probability 0.5):")
    for target in (0.99, 0.9, 0.75, 0.6, 0.51):
        th = threshold_for_rate(target, 0.5)
        achieved = component_stats(th, 0.5).info_rate
        print(f"  rate {target:5.2f} -> threshold {th:8.4f} "
              f"(achieved {achieved:.10f})")

    # The energy story: expected cost per slot against the all-high baseline.
    e_high, e_low = 1.0, 0.1
    print("\nexpected energy per slot at arrival probability 0.5:")
    for target in (1.0, 0.9, 0.75, 0.6):
        th = threshold_for_rate(target, 0.5) if target < 1.0 else 0.0
        mu = component_stats(th, 0.5).high_rate if target < 1.0 else 1.0
        cost = mu * e_high + (1.0 - mu) * e_low
        print(f"  rate {target:5.2f}: threshold {th:7.4f}, "
              f"energy {cost:6.3f} ({100 * cost / e_high:5.1f}% of all-high)")

    rng = np.random.default_rng(0)
    sampled = rng.uniform(0.51, 1.0, size=5)
    worst = max(abs(component_stats(threshold_for_rate(r, 0.5), 0.5).info_rate - r)
                for r in sampled)
    print(f"\nround-trip residual over {sampled.size} random rates: {worst:.2e}")


if __name__ == "__main__":
    main()
