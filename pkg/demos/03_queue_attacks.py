"""Mempool throughput under queue attacks, and what waiting does to safety.

First the sustainable transaction rates with no attack, with empty
adversarial blocks, and with the selfish queue-service strategy. Then a
small backlogged queue: the stationary backlog, the block a new
transaction lands in, and the safety bound for a transaction that has to
wait several blocks before inclusion.

    python demos/03_queue_attacks.py
"""

import math

from nakaqueue import (
    QueueSpec,
    derive,
    general_safety_report,
    inclusion_probabilities,
    lambda1_empty_block_attack,
    queue_steady_state,
    safety_violation,
    stability_threshold,
)
from nakaqueue.queue import lambda2_for

mu1 = math.log(10) / 4
b = 4500

print("sustainable tx/s at b = 4500")
print("  block    beta   no attack   empty blocks   selfish   honest share")
for mu2 in (1 / 600, 1 / 60):
    for beta in (0.1, 0.25, 0.4):
        p = derive(1 - beta, mu1, mu2)
        lam2, share = lambda2_for(p, b)
        print(
            f"  {1 / mu2:4.0f}s   {beta:4.2f}   {stability_threshold(b, mu1, mu2):9.2f}"
            f"   {lambda1_empty_block_attack(b, mu1, p.kappa, p.alpha):12.2f}   {lam2:7.2f}   {share:.4f}"
        )

# a small block size keeps the backlog interesting at Bitcoin's rates
p = derive(0.9, mu1, 1 / 600)
b_small = 50
thr = stability_threshold(b_small, mu1, p.mu2)
q = QueueSpec(b_small, 0.8 * thr, mu1, p.mu2)
ss = queue_steady_state(q)
incl = inclusion_probabilities(ss)
print(f"\nb = {b_small}, arrivals at 80% of capacity ({q.lam:.4f}/s)")
print(f"  mean backlog {ss.mean_backlog():.1f} tx over {ss.J_max + 1} levels, residual {ss.residual:.1e}")
print("  P(tx waits for block m):", " ".join(f"{x:.3f}" for x in incl.probs[:6]), "...")

rep = general_safety_report(p, q, 6)
print(f"\nsix-block bound: next block {safety_violation(p, 6).p_value:.4e}, with waiting {rep.p_value:.4e}")
print("  per-block terms:", " ".join(f"{t:.3e}" for t in rep.terms[:5]), "...")
print("  terms nonincreasing in m:", rep.monotone)
