import math

import numpy as np
import pytest

from nakaqueue import derive

MU1_BTC = math.log(10) / 4


@pytest.fixture
def btc():
    """Honest share 0.9 at ten-minute blocks and a 4 s 90th-percentile delay."""
    return derive(0.9, MU1_BTC, 1 / 600)


def lead_chain_oracle(p, n_states, kind="upper"):
    """Stationary law of the explicit lead chain, solved densely.

    From lead ``i`` the adversary adds one block with probability beta; an
    honest jumper with ``j`` rigged blocks during its delay (probability
    ``alpha sigma rho^j``) moves the lead to ``max(i - 1, 0) + j``. The last
    state absorbs overflow.
    """
    s, r = (p.sigma, p.rho) if kind == "upper" else (p.sigma_prime, p.rho_prime)
    P = np.zeros((n_states, n_states))
    j = np.arange(n_states)
    jump = p.alpha * s * r**j
    for i in range(n_states):
        P[i, min(i + 1, n_states - 1)] += p.beta
        dest = max(i - 1, 0) + j
        ok = dest < n_states
        np.add.at(P[i], dest[ok], jump[ok])
        P[i, -1] += 1.0 - P[i].sum()
    A = P.T - np.eye(n_states)
    A[0] = 1.0
    rhs = np.zeros(n_states)
    rhs[0] = 1.0
    return np.linalg.solve(A, rhs)


def s_k_closed_form(p, k, s_max, kind="upper"):
    """Double-sum closed form for the confirmation-window count, term by term."""
    s, r = (p.sigma, p.rho) if kind == "upper" else (p.sigma_prime, p.rho_prime)
    out = np.zeros(s_max + 1)
    for tot in range(s_max + 1):
        acc = 0.0
        for n in range(tot + 1):
            acc += math.comb(k - 1 + n, n) * math.comb(k - 1 + tot - n, tot - n) * r**n * p.beta ** (tot - n)
        out[tot] = p.alpha**k * s**k * acc
    return out
