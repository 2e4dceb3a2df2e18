"""Check the analytics against the Monte Carlo simulator.

The rigged-attack simulator plays the lead chain, the confirmation window
and the post-confirmation race step by step; the queue simulator runs the
two-phase batch queue event by event. Both are seeded, so this script
prints the same numbers every time.

    python demos/04_simulation_crosscheck.py
"""

import math
import time

from nakaqueue import (
    QueueSpec,
    derive,
    inter_jumper_dist,
    lead_distribution,
    queue_steady_state,
    safety_violation,
    selfish_honest_fraction,
    stability_threshold,
    total_variation,
)
from nakaqueue.mcsim import SimConfig, simulate_rigged_attack, simulate_selfish_queue_attack, simulate_two_phase_queue

p = derive(0.9, math.log(10) / 4, 1 / 600)

t0 = time.perf_counter()
rep = simulate_rigged_attack(SimConfig(seed=42, trials=2_000_000, params=p, k=6, k_max=10))
print(f"rigged attack, {rep.trials:,} trials ({time.perf_counter() - t0:.1f}s)")
for k in (6, 8, 10):
    exact = safety_violation(p, k).p_value
    sim = rep.violation_by_k[k]
    print(f"  k={k:2d}: simulated {sim:.3e}, bound {exact:.3e}")
print(f"  TV(lead) = {total_variation(rep.empirical_pmfs['lead'], lead_distribution(p)):.1e}")
print(f"  TV(C)    = {total_variation(rep.empirical_pmfs['inter_jumper'], inter_jumper_dist(p)):.1e}")

r = simulate_selfish_queue_attack(SimConfig(seed=42, trials=20, params=p, horizon=50_000))
print(f"\nselfish attack: honest share {r.chain_quality:.5f} +- {r.chain_quality_se:.5f},"
      f" closed form {selfish_honest_fraction(p):.5f}")

print("\ntwo-phase queue, b = 5, mu1 = mu2 = 1")
for load in (0.9, 1.1):
    q = QueueSpec(5, load * stability_threshold(5, 1.0, 1.0), 1.0, 1.0)
    qs = simulate_two_phase_queue(SimConfig(seed=42, trials=8, queue=q, horizon=2_000_000)).queue_stats
    line = f"  load {load}: {qs.verdict:8s} mean backlog {qs.mean_backlog:8.2f} +- {qs.ci_half_width:.2f}"
    if q.is_stable:
        line += f"  (exact {queue_steady_state(q).mean_backlog():.2f})"
    print(line)
