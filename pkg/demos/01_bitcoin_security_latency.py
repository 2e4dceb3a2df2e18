"""How deep should a Bitcoin-like chain confirm?

Walks through the safety-violation bound at ten-minute blocks and a 4 s
90th-percentile propagation delay: the bound at the customary six blocks,
how it falls with depth, and the depth needed for a 1e-3 target against
adversaries of different size.

    python demos/01_bitcoin_security_latency.py
"""

import math

from nakaqueue import (
    BoundKind,
    derive,
    expected_confirmation_latency,
    fault_tolerance_beta_max,
    mu1_from_percentile,
    safety_violation,
)
from nakaqueue.sweeps import derive_k

mu1 = mu1_from_percentile(4.0, 0.9)  # 90% of blocks arrive within 4 s
mu2 = 1 / 600

p = derive(0.9, mu1, mu2)
print(f"delay rate mu1 = {mu1:.5f}/s, fork rate kappa = {p.kappa:.4e}")
print(f"largest tolerated adversary: beta < {fault_tolerance_beta_max(p.kappa):.4f}")

rep = safety_violation(p, 6)
print(f"\nsix confirmations against beta = 0.1: p <= {rep.p_value:.4g}")
print(f"  (lead distribution keeps {len(rep.lead)} points, truncation error {rep.truncation_error:.1e})")

print("\n  k    upper bound   lower bound   latency")
for k in (1, 2, 4, 6, 10, 15, 22, 30):
    up = safety_violation(p, k, BoundKind.UPPER).p_value
    lo = safety_violation(p, k, BoundKind.LOWER).p_value
    print(f"{k:3d}   {up:11.3e}   {lo:11.3e}   {expected_confirmation_latency(k, mu2) / 3600:5.1f} h")

# the bound is the tail of a sum of three nonnegative counts, so deeper is safer
print("\ndepth for p < 1e-3:")
for beta in (0.1, 0.25, 0.4):
    k = derive_k(1 - beta, mu1, mu2)
    hours = expected_confirmation_latency(k, mu2) / 3600
    print(f"  beta = {beta:4.2f}: k = {k:3d}  (about {math.ceil(hours)} h)")
