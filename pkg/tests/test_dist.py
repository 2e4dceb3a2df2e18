import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nakaqueue import ParameterDomainError, PmfOverflowError, convolve, tail_prob, total_variation
from nakaqueue.dist import Pmf, from_probs, geometric, materialize, point_mass


def random_pmf(draw_probs, offset):
    probs = np.asarray(draw_probs, dtype=float)
    probs = probs / probs.sum()
    return from_probs(probs, offset=offset)


pmfs = st.builds(
    random_pmf,
    st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=30),
    st.integers(-5, 5),
)


def test_pmf_validation():
    with pytest.raises(ParameterDomainError):
        Pmf(0, np.array([0.5, 0.6]), 0.0, 0.0)
    with pytest.raises(ParameterDomainError):
        Pmf(0, np.array([1.0, 0.0]), 0.0, 0.0)
    with pytest.raises(ParameterDomainError):
        Pmf(0, np.array([0.9]), 0.1, 0.01)
    with pytest.raises(ParameterDomainError):
        Pmf(0, np.array([-0.1, 1.1]), 0.0, 0.0)


def test_identity_element():
    x = geometric(0.3, 1e-12)
    y = convolve(point_mass(0), x)
    assert y.offset == x.offset
    assert np.abs(y.probs - x.probs).max() <= 1e-15


def test_point_masses_add():
    z = convolve(point_mass(2), point_mass(3))
    assert z.offset == 5 and len(z) == 1 and z.probs[0] == 1.0


def test_geometric_square_is_negative_binomial():
    g = geometric(0.5, 1e-12)
    z = convolve(g, g)
    oracle = stats.nbinom.pmf(np.arange(len(z)), 2, 0.5)
    assert np.abs(z.probs - oracle).max() < 1e-12


def test_geometric_tail():
    g = geometric(0.5, 1e-12)
    assert tail_prob(g, 3) == pytest.approx(0.125, abs=1e-10)
    assert g.tail_mass <= 1e-12


def test_tail_prob_edges():
    x = from_probs([0.2, 0.3, 0.5], offset=-1)
    assert tail_prob(point_mass(0), 1) == 0.0
    assert tail_prob(x, x.offset) == pytest.approx(1.0, abs=1e-10)
    assert tail_prob(x, x.offset + len(x)) == x.tail_mass


def test_total_variation_examples():
    x = geometric(0.4, 1e-14)
    assert total_variation(from_probs([0.25, 0.75]), from_probs([0.25, 0.75])) == 0.0
    assert total_variation(point_mass(0), point_mass(1)) == 1.0
    a, b = geometric(0.5, 1e-13), geometric(0.25, 1e-13)
    n = max(len(a), len(b))
    pa, pb = np.zeros(n), np.zeros(n)
    pa[: len(a)] = a.probs
    pb[: len(b)] = b.probs
    direct = 0.5 * sum(abs(u - v) for u, v in zip(pa, pb)) + 0.5 * (a.tail_mass + b.tail_mass)
    assert total_variation(a, b) == pytest.approx(direct, abs=1e-12)
    assert total_variation(x, x) == pytest.approx(x.tail_mass, abs=1e-15)


def test_convolve_overflow():
    x = from_probs(np.full(100, 0.01))
    with pytest.raises(PmfOverflowError):
        convolve(x, x, max_len=150)


def test_materialize_respects_tol_and_min_len():
    q = 0.999
    x = materialize(lambda a, b: (1 - q) * q ** np.arange(a, b, dtype=float), tol=1e-10, min_len=20_000)
    assert len(x) >= 20_000 or x.tail_mass <= 1e-10
    assert x.tail_mass <= x.tol
    assert abs(x.probs.sum() + x.tail_mass - 1) < 1e-10


@settings(max_examples=60, deadline=None)
@given(pmfs, pmfs, pmfs)
def test_convolve_commutative_associative(a, b, c):
    ab, ba = convolve(a, b), convolve(b, a)
    assert ab.offset == ba.offset
    assert np.abs(ab.probs - ba.probs).max() < 1e-12
    left, right = convolve(convolve(a, b), c), convolve(a, convolve(b, c))
    assert left.offset == right.offset
    assert np.abs(left.probs - right.probs).max() < 1e-12
    assert ab.tail_mass >= max(a.tail_mass, b.tail_mass)


@given(pmfs)
def test_tail_prob_nonincreasing(x):
    vals = [tail_prob(x, t) for t in range(x.offset - 2, x.offset + len(x) + 2)]
    assert all(u >= v for u, v in zip(vals, vals[1:]))
    assert tail_prob(x, x.offset + len(x)) == x.tail_mass


def test_csv_roundtrip():
    x = from_probs([0.5, 0.5], offset=3)
    assert x.to_csv() == "support_point,probability\n3,0.5\n4,0.5\n"
