import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nakaqueue import (
    BoundKind,
    NotPositiveRecurrent,
    ThresholdUnreachable,
    confirmation_dist,
    convolve,
    derive,
    fault_tolerance_beta_max,
    inter_jumper_dist,
    lead_distribution,
    max_safe_kappa,
    safety_violation,
    ultimate_beta_max,
)
from nakaqueue.dist import point_mass
from nakaqueue.seclat import recovery_ratio, tolerates_adversary

from conftest import MU1_BTC, lead_chain_oracle, s_k_closed_form

GRID = [(a, kap) for a in (0.6, 0.75, 0.9) for kap in (0.003, 0.02, 0.1)]
KINDS = [BoundKind.UPPER, BoundKind.LOWER]


# ------------------------------------------------------------------ lead


def test_lead_without_adversary_or_delay():
    lead = lead_distribution(derive(1.0, 1e6, 1.0))
    assert lead.probs[0] >= 1 - 1e-5


def test_lead_pi0_closed_form(btc):
    lead = lead_distribution(btc, BoundKind.UPPER)
    assert lead.probs[0] == pytest.approx(3 - (1 + btc.kappa) - 1 / 0.9, abs=1e-10)
    assert lead.probs[0] == pytest.approx(3 - 1 / btc.sigma - 1 / btc.alpha, abs=1e-12)
    assert lead.probs[0] == pytest.approx(0.885993, abs=1e-6)


def test_lead_not_recurrent():
    with pytest.raises(NotPositiveRecurrent):
        lead_distribution(derive(0.5, 1.0, 0.5))


@pytest.mark.parametrize("alpha, kappa", GRID)
@pytest.mark.parametrize("kind", KINDS)
def test_lead_matches_dense_chain(alpha, kappa, kind):
    p = derive(alpha, 1.0, kappa)
    lead = lead_distribution(p, kind)
    n = 800
    oracle = lead_chain_oracle(p, n, kind.value)
    m = min(len(lead), n // 2)
    assert np.abs(lead.probs[:m] - oracle[:m]).max() < 1e-10
    assert abs(lead.probs.sum() + lead.tail_mass - 1) < 1e-10


def test_lower_kind_uses_primed_rates(btc):
    lead = lead_distribution(btc, "lower")
    assert lead.probs[0] == pytest.approx(3 - 1 / btc.sigma_prime - 1 / btc.alpha, abs=1e-12)


# ----------------------------------------------------------- inter-jumper


@pytest.mark.parametrize("alpha, kappa", GRID)
def test_pc_first_term_and_mean(alpha, kappa):
    p = derive(alpha, 1.0, kappa)
    pc = inter_jumper_dist(p)
    assert pc.probs[0] == pytest.approx(p.alpha * p.sigma, rel=1e-15)
    assert pc.mean() == pytest.approx(p.beta / p.alpha + p.rho / p.sigma, abs=1e-10)


def test_pc_mean_bitcoin(btc):
    pc = inter_jumper_dist(btc)
    assert pc.mean() == pytest.approx(btc.beta / btc.alpha + btc.rho / btc.sigma, abs=1e-10)


def test_pc_no_adversary_is_geometric():
    p = derive(1.0, 1.0, 0.3)
    pc = inter_jumper_dist(p)
    c = np.arange(len(pc))
    assert np.abs(pc.probs - p.sigma * p.rho**c).max() < 1e-15


def test_pc_removable_singularity():
    # rho = beta when mu2/(mu1+mu2) = 1 - alpha
    alpha = 0.8
    p = derive(alpha, 4.0, 1.0)
    assert p.rho == pytest.approx(p.beta, abs=1e-15)
    pc = inter_jumper_dist(p)
    c = np.arange(len(pc))
    assert np.abs(pc.probs - p.alpha * p.sigma * (c + 1) * p.beta**c).max() < 1e-14
    assert np.all(np.isfinite(pc.probs))


@pytest.mark.parametrize("alpha, kappa", [(0.9, 0.003), (0.7, 0.05), (0.6, 0.2)])
def test_pc_against_raw_formula(alpha, kappa):
    p = derive(alpha, 1.0, kappa)
    pc = inter_jumper_dist(p)
    for c in range(min(len(pc), 40)):
        raw = p.alpha * p.beta**c * p.sigma * sum((p.rho / p.beta) ** j for j in range(c + 1))
        assert pc.probs[c] == pytest.approx(raw, rel=1e-10, abs=1e-300)


# ----------------------------------------------------------- confirmation


def test_confirmation_single_jumper(btc):
    a, b = confirmation_dist(btc, 1), inter_jumper_dist(btc)
    n = min(len(a), len(b))
    assert np.abs(a.probs[:n] - b.probs[:n]).max() < 1e-12


@pytest.mark.parametrize("k", [1, 2, 5, 17])
def test_confirmation_zero_term(btc, k):
    s = confirmation_dist(btc, k)
    assert s.probs[0] == pytest.approx((btc.alpha * btc.sigma) ** k, rel=1e-13)


def test_confirmation_three_jumpers():
    p = derive(0.9, 1.0, 0.1)
    pc = inter_jumper_dist(p)
    brute = convolve(convolve(pc, pc), pc)
    s = confirmation_dist(p, 3)
    n = min(len(s), len(brute))
    assert np.abs(s.probs[:n] - brute.probs[:n]).max() < 1e-12


@pytest.mark.parametrize("alpha, kappa", GRID)
def test_confirmation_closed_form(alpha, kappa):
    p = derive(alpha, 1.0, kappa)
    pc = inter_jumper_dist(p)
    acc = point_mass(0)
    for k in range(1, 9):
        acc = convolve(acc, pc)
        s = confirmation_dist(p, k)
        closed = s_k_closed_form(p, k, 60)
        n = min(61, len(s), len(acc))
        assert np.abs(s.probs[:n] - closed[:n]).max() < 1e-10
        assert np.abs(acc.probs[:n] - closed[:n]).max() < 1e-10


def test_confirmation_no_adversary():
    p = derive(1.0, 1.0, 0.5)
    s = confirmation_dist(p, 4)
    closed = s_k_closed_form(p, 4, 30)
    assert np.abs(s.probs[:31] - closed).max() < 1e-14


def test_confirmation_deep_k_is_finite():
    p = derive(0.6, MU1_BTC, 1 / 30)
    s = confirmation_dist(p, 217)
    assert np.all(np.isfinite(s.probs))
    assert s.tail_mass <= 2e-14


# ----------------------------------------------------------------- bound


def test_bound_bitcoin(btc):
    r = safety_violation(btc, 6, BoundKind.UPPER)
    assert round(r.p_value, 4) == 0.0012
    assert r.truncation_error <= 3e-14
    assert r.post is r.lead


def test_bound_table_examples():
    r = safety_violation(derive(0.9, MU1_BTC, 1 / 90), 7)
    assert float(f"{r.p_value:.1g}") == 7e-4
    r = safety_violation(derive(0.6, MU1_BTC, 1 / 600), 6)
    assert round(r.p_value, 4) == 0.6925


def test_zero_depth_is_certain(btc):
    assert safety_violation(btc, 0).p_value == pytest.approx(1.0)


@pytest.mark.parametrize("alpha, kappa", GRID + [(0.75, 1 / 600 / MU1_BTC)])
def test_lower_below_upper(alpha, kappa):
    p = derive(alpha, 1.0, kappa)
    for k in (1, 3, 6, 12, 30):
        lo = safety_violation(p, k, BoundKind.LOWER).p_value
        hi = safety_violation(p, k, BoundKind.UPPER).p_value
        assert 0.0 <= lo <= hi <= 1.0


@pytest.mark.parametrize("alpha, kappa", GRID)
def test_bound_vanishes_in_depth(alpha, kappa):
    p = derive(alpha, 1.0, kappa)
    vals = [safety_violation(p, k).p_value for k in range(1, 41)]
    # below ~1e-14 the values are truncation noise
    assert all(a >= b - 1e-13 for a, b in zip(vals, vals[1:]))
    assert safety_violation(p, 200).p_value < safety_violation(p, 20).p_value < safety_violation(p, 2).p_value


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9])
def test_bound_increasing_in_kappa(alpha):
    kappas = np.geomspace(1e-4, 0.95 * (2 - 1 / alpha), 25)
    vals = [safety_violation(derive(alpha, 1.0, kap), 6).p_value for kap in kappas]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("kappa", [0.003, 0.02, 0.1])
def test_bound_increasing_in_beta(kappa):
    betas = np.linspace(0.01, 0.95 * fault_tolerance_beta_max(kappa), 20)
    vals = [safety_violation(derive(1 - b, 1.0, kappa), 6).p_value for b in betas]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(GRID), st.sampled_from([0.5, 2.0, 10.0]), st.integers(1, 30), st.sampled_from(KINDS))
def test_scale_invariance(point, c, k, kind):
    alpha, kappa = point
    p = derive(alpha, MU1_BTC, kappa * MU1_BTC)
    a = safety_violation(p, k, kind).p_value
    b = safety_violation(p.scaled(c), k, kind).p_value
    assert b == pytest.approx(a, rel=1e-12, abs=1e-15)


# ----------------------------------------------------- fault tolerance


@pytest.mark.parametrize("mu2, expected", [(1 / 600, 0.4993), (1 / 90, 0.4951), (1 / 60, 0.4927), (1 / 30, 0.4851)])
def test_beta_max_table(mu2, expected):
    assert fault_tolerance_beta_max(mu2 / MU1_BTC) == pytest.approx(expected, abs=1e-4)


def test_beta_max_limits():
    assert fault_tolerance_beta_max(0.0) == 0.5
    assert fault_tolerance_beta_max(1.0) == 0.0 and not tolerates_adversary(1.0)
    assert fault_tolerance_beta_max(3.0) == 0.0


def test_ultimate_beta_max_examples():
    assert ultimate_beta_max(0.0) == 0.5
    b = ultimate_beta_max(1.0)
    assert b == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-12)
    assert 1 / b - 1 / (1 - b) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(0.0, 50.0))
def test_ultimate_dominates_rigged(kappa):
    u = ultimate_beta_max(kappa)
    assert 0.0 < u <= 0.5
    assert u >= fault_tolerance_beta_max(kappa)
    if kappa > 0:
        assert kappa * u * u - (2 + kappa) * u + 1 == pytest.approx(0.0, abs=1e-12)


# ------------------------------------------------------------ kappa search


def test_kappa_max_recovers_bitcoin(btc):
    p_btc = safety_violation(btc, 6).p_value
    kap = max_safe_kappa(0.9, 6, p_btc + 1e-9)
    assert kap == pytest.approx(btc.kappa, rel=1e-4)
    assert kap == pytest.approx(2.8957e-3, rel=1e-3)


def test_kappa_max_at_certain_threshold():
    assert max_safe_kappa(0.9, 6, 1.0) == pytest.approx(2 - 1 / 0.9, abs=1e-8)


def test_kappa_max_unreachable():
    with pytest.raises(ThresholdUnreachable):
        max_safe_kappa(0.9, 1, 1e-12)


def test_kappa_max_brackets_threshold():
    kap = max_safe_kappa(0.75, 30, 1e-3)
    assert safety_violation(derive(0.75, 1.0, kap * (1 - 1e-5)), 30).p_value < 1e-3
    assert safety_violation(derive(0.75, 1.0, kap * (1 + 1e-5)), 30).p_value >= 1e-3


def test_recovery_ratio_root(btc):
    # E[z^C] = alpha sigma / ((1 - z beta)(1 - z rho)) must equal z at the root
    z = recovery_ratio(btc)
    assert 1.0 < z < 1.0 / max(btc.beta, btc.rho)
    gen = btc.alpha * btc.sigma / ((1 - z * btc.beta) * (1 - z * btc.rho))
    assert gen == pytest.approx(z, rel=1e-12)
