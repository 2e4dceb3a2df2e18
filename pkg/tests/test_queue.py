import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nakaqueue import (
    NetworkModel,
    QueueSpec,
    SelfishDominates,
    Unstable,
    derive,
    generator_blocks,
    lambda0_design,
    lambda1_empty_block_attack,
    lambda2_selfish_attack,
    queue_steady_state,
    selfish_honest_fraction,
    stability_threshold,
)
from nakaqueue.errors import ParameterDomainError, TruncationFailure
from nakaqueue.queue import lambda2_for, queue_steady_state_rmatrix, truncated_generator

from conftest import MU1_BTC

KAPPA_BTC = (1 / 600) / MU1_BTC


# --------------------------------------------------------------- throughput


def test_threshold_examples():
    assert stability_threshold(4500, MU1_BTC, 1 / 600) == pytest.approx(7.48, abs=5e-3)
    assert stability_threshold(4500, MU1_BTC, 1 / 30) == pytest.approx(141.79, abs=5e-3)
    assert stability_threshold(7, math.inf, 0.5) == 3.5


def test_lambda0_design():
    b, c = 4500, 1e6
    # delta0 = 0: g(b) = c/b
    assert lambda0_design(b, NetworkModel(c, 0.0), 0.02) == pytest.approx(b * (c / b) * 0.02 / 1.02)
    net = NetworkModel(c=4500 / (4 / math.log(10)), delta0=0.0)
    assert net.rate(4500) == pytest.approx(MU1_BTC)
    assert lambda0_design(4500, net, KAPPA_BTC) == pytest.approx(7.48, abs=5e-3)
    net = NetworkModel(c=1000.0, delta0=2.0)
    assert lambda0_design(b, net, math.inf) == pytest.approx(b * 1000 / (b + 2 * 1000))
    kap = 0.05
    g = net.rate(b)
    assert lambda0_design(b, net, kap) == pytest.approx(stability_threshold(b, g, kap * g), rel=1e-12)


def test_lambda1_examples():
    assert lambda1_empty_block_attack(4500, MU1_BTC, KAPPA_BTC, 0.9) == pytest.approx(6.73, abs=5e-3)
    assert lambda1_empty_block_attack(4500, MU1_BTC, (1 / 30) / MU1_BTC, 0.6) == pytest.approx(86.98, abs=5e-3)
    assert lambda1_empty_block_attack(4500, MU1_BTC, KAPPA_BTC, 1.0) == pytest.approx(
        stability_threshold(4500, MU1_BTC, 1 / 600), rel=1e-12
    )


def test_selfish_fraction_examples(btc):
    for alpha in (0.6, 0.75, 0.9):
        # kappa -> 0
        p = derive(alpha, 1e9, 1e-3)
        assert selfish_honest_fraction(p) == pytest.approx((alpha - (1 - alpha)) / alpha, abs=1e-9)
    assert selfish_honest_fraction(derive(1.0, 1.0, 2.0)) == 1.0
    p = derive(0.6, MU1_BTC, 1 / 600)
    ap = selfish_honest_fraction(p)
    assert ap == pytest.approx(0.33230, abs=5e-6)
    assert lambda2_selfish_attack(4500, MU1_BTC, p.kappa, ap) == pytest.approx(2.49, abs=5e-3)
    assert lambda2_selfish_attack(4500, MU1_BTC, KAPPA_BTC, selfish_honest_fraction(btc)) == pytest.approx(6.65, abs=5e-3)
    p = derive(0.75, MU1_BTC, 1 / 90)
    assert lambda2_selfish_attack(4500, MU1_BTC, p.kappa, selfish_honest_fraction(p)) == pytest.approx(32.78, abs=5e-3)
    assert lambda2_selfish_attack(4500, MU1_BTC, KAPPA_BTC, 1.0) == pytest.approx(
        stability_threshold(4500, MU1_BTC, 1 / 600), rel=1e-12
    )


def test_selfish_dominates():
    p = derive(0.5, 1.0, 0.1)
    with pytest.raises(SelfishDominates):
        selfish_honest_fraction(p)
    assert lambda2_for(p, 100) == (0.0, 0.0)


@settings(max_examples=200)
@given(st.floats(0.5, 1.0), st.floats(1e-5, 0.5), st.integers(1, 10_000))
def test_throughput_ordering(alpha, kappa, b):
    p = derive(alpha, 1.0, kappa)
    lam0 = stability_threshold(b, 1.0, kappa)
    lam1 = lambda1_empty_block_attack(b, 1.0, kappa, alpha)
    lam2, ap = lambda2_for(p, b)
    assert lam2 <= lam1 * (1 + 1e-12) and lam1 <= lam0 * (1 + 1e-12)
    assert ap <= alpha + 1e-12
    if alpha == 1.0:
        assert lam2 == pytest.approx(lam0) and lam1 == pytest.approx(lam0)


def test_alpha_prime_decreasing():
    for kappa in (0.001, 0.01, 0.1):
        aps = [lambda2_for(derive(1 - b, 1.0, kappa), 10)[1] for b in np.linspace(0.0, 0.45, 30)]
        assert all(x >= y for x, y in zip(aps, aps[1:]))
    for alpha in (0.6, 0.75, 0.9):
        aps = [lambda2_for(derive(alpha, 1.0, k), 10)[1] for k in np.geomspace(1e-4, 1.0, 30)]
        assert all(x >= y for x, y in zip(aps, aps[1:]))


# ---------------------------------------------------------------- blocks


def test_blocks_b1():
    lam, mu1, mu2 = 0.3, 2.0, 0.7
    blk = generator_blocks(QueueSpec(1, lam, mu1, mu2))
    np.testing.assert_array_equal(blk.a1, [[-(lam + mu2), 0], [mu1, -(lam + mu1)]])
    np.testing.assert_array_equal(blk.ab, [[0, mu2], [0, 0]])
    np.testing.assert_array_equal(blk.a0, lam * np.eye(2))


def test_blocks_pattern_b3():
    blk = generator_blocks(QueueSpec(3, 1.0, 2.0, 3.0))
    for m in (blk.a0, blk.a1, blk.ab, *blk.boundary):
        assert m.shape == (4, 4)
    assert np.count_nonzero(blk.a0) == 4
    assert set(zip(*np.nonzero(blk.ab))) == {(0, 3)}
    nz = set(zip(*np.nonzero(blk.a1)))
    assert nz == {(0, 0), (1, 1), (2, 2), (3, 3), (1, 0), (2, 0), (3, 0)}
    assert blk.boundary[0][0, 0] == -1.0
    for i in range(1, 4):
        assert set(zip(*np.nonzero(blk.boundary[i]))) == {(0, i)}
        assert blk.boundary[i][0, i] == 3.0
    off = blk.a1 - np.diag(np.diag(blk.a1))
    assert np.all(off >= 0) and np.all(np.diag(blk.a1) < 0)


@pytest.mark.parametrize("b", [1, 2, 5, 9])
def test_assembled_rows_sum_to_zero(b):
    q = QueueSpec(b, 0.4, 1.3, 0.8)
    blk = generator_blocks(q)
    ones = np.ones(b + 1)
    assert np.abs((blk.a0 + blk.boundary[0]) @ ones).max() < 1e-9
    for j in range(1, b + 1):
        assert np.abs((blk.a0 + blk.a1 + blk.boundary[j]) @ ones).max() < 1e-9
    assert np.abs((blk.a0 + blk.a1 + blk.ab) @ ones).max() < 1e-9
    gen = truncated_generator(q, 4 * b + 4)
    assert np.abs(gen @ np.ones(gen.shape[0])).max() < 1e-9


def test_truncated_generator_matches_blocks():
    q = QueueSpec(3, 0.4, 1.3, 0.8)
    blk = generator_blocks(q)
    n, levels = 4, 12
    dense = truncated_generator(q, levels).toarray()

    def block(j, l):
        return dense[j * n : (j + 1) * n, l * n : (l + 1) * n]

    np.testing.assert_allclose(block(0, 0), blk.boundary[0])
    for j in range(1, 4):
        np.testing.assert_allclose(block(j, 0), blk.boundary[j] if j < 3 else blk.ab)
    for j in range(4, levels - 1):
        np.testing.assert_allclose(block(j, j), blk.a1)
        np.testing.assert_allclose(block(j, j + 1), blk.a0)
        np.testing.assert_allclose(block(j, j - 3), blk.ab)


# ----------------------------------------------------------- steady state


def test_steady_state_contract():
    q = QueueSpec(5, 0.5 * stability_threshold(5, 1, 1), 1.0, 1.0)
    ss = queue_steady_state(q)
    assert ss.pi.sum() + ss.tail_mass == pytest.approx(1.0, abs=1e-9)
    assert ss.residual < 1e-9
    assert ss.tail_mass < 1e-12
    assert np.all(ss.pi >= 0)


@pytest.mark.parametrize("factor", [1.1, 1.0])
def test_unstable(factor):
    q = QueueSpec(5, factor * stability_threshold(5, 1, 1), 1.0, 1.0)
    with pytest.raises(Unstable):
        queue_steady_state(q)


@pytest.mark.parametrize("b, lam, mu1, mu2", [(1, 0.3, 1.0, 1.0), (3, 0.4, 1.0, 1.0), (4, 1.2, 2.0, 0.7)])
def test_steady_state_against_dense_solve(b, lam, mu1, mu2):
    # full (b+1)-phase generator, solved without the phase lumping
    q = QueueSpec(b, lam, mu1, mu2)
    ss = queue_steady_state(q)
    levels = ss.J_max + 1
    gen = truncated_generator(q, levels).toarray()
    a = gen.T.copy()
    a[0] = 1.0
    rhs = np.zeros(a.shape[0])
    rhs[0] = 1.0
    ref = np.linalg.solve(a, rhs).reshape(levels, b + 1).T
    assert np.abs(ss.pi - ref).max() < 1e-12


@pytest.mark.parametrize("b, load", [(1, 0.5), (3, 0.7), (6, 0.9)])
def test_steady_state_against_matrix_geometric(b, load):
    q = QueueSpec(b, load * stability_threshold(b, 1.0, 0.5), 1.0, 0.5)
    ss = queue_steady_state(q)
    rm = queue_steady_state_rmatrix(q, levels=ss.J_max + 1)
    assert np.abs(ss.pi - rm.pi).max() < 1e-10
    assert rm.residual < 1e-10


@pytest.mark.parametrize("b, mu1, mu2", [(5, 1.0, 1.0), (50, 1.0, 0.1)])
def test_stability_boundary(b, mu1, mu2):
    thr = stability_threshold(b, mu1, mu2)
    ss = queue_steady_state(QueueSpec(b, 0.95 * thr, mu1, mu2))
    assert ss.tail_mass < 1e-12
    with pytest.raises((Unstable, TruncationFailure)):
        queue_steady_state(QueueSpec(b, 1.05 * thr, mu1, mu2))


def test_truncation_cap():
    q = QueueSpec(50, 0.999 * stability_threshold(50, 1.0, 0.1), 1.0, 0.1)
    with pytest.raises(TruncationFailure):
        queue_steady_state(q, max_states=20_000)


@pytest.mark.parametrize("b", [2, 5, 20])
def test_light_load_marginal_decreasing(b):
    q = QueueSpec(b, 0.3 * stability_threshold(b, 1.0, 1.0), 1.0, 1.0)
    m = queue_steady_state(q).level_marginal[b:]
    m = m[m > 1e-13]  # below this the entries are solver rounding
    rises = np.flatnonzero(np.diff(m) > 1e-15 * m[:-1])
    if rises.size:
        warnings.warn(f"level marginal rises beyond b at {rises[:5]}")


def test_zero_arrivals():
    ss = queue_steady_state(QueueSpec(4, 0.0, 1.0, 1.0))
    assert ss.level_marginal[0] == pytest.approx(1.0)
    assert ss.mean_backlog() == 0.0


def test_spec_validation():
    for bad in [(0, 1, 1, 1), (2.5, 1, 1, 1), (2, -1, 1, 1), (2, 1, 0, 1), (2, 1, 1, math.inf)]:
        with pytest.raises(ParameterDomainError):
            QueueSpec(*bad)


def test_csv_export():
    ss = queue_steady_state(QueueSpec(1, 0.1, 1.0, 1.0))
    lines = ss.to_csv().splitlines()
    assert lines[0] == "i,j,probability"
    assert lines[1].startswith("0,0,")
