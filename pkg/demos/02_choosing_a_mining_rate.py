"""Pick the fastest mining rate that still meets a security target.

Only the fork rate kappa = mu2/mu1 enters the bound, so the search runs
over kappa alone. Faster blocks mean more throughput and shorter
confirmation times, up to the point where forks eat the security margin.

    python demos/02_choosing_a_mining_rate.py
"""

import math

from nakaqueue import derive, max_safe_kappa, safety_violation, stability_threshold

mu1 = math.log(10) / 4
alpha, target, b = 0.9, 1e-3, 4500

print(f"alpha = {alpha}, target p < {target:g}, b = {b}\n")
print("  k   kappa_max    block interval   throughput   latency")
for k in (7, 8, 10, 15, 20):
    kap = max_safe_kappa(alpha, k, target)
    mu2 = kap * mu1
    check = safety_violation(derive(alpha, mu1, mu2 * (1 - 1e-5)), k).p_value
    assert check < target
    print(
        f"{k:3d}   {kap:.4e}   {1 / mu2:10.1f} s   {stability_threshold(b, mu1, mu2):8.2f}/s"
        f"   {k / mu2 / 60:6.1f} min"
    )

# six blocks cannot reach 1e-3 against beta = 0.1 at any mining rate, so the table starts at seven
print("\nrecurrence boundary kappa = 2 - 1/alpha =", round(2 - 1 / alpha, 6))
