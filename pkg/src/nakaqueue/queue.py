"""Batch-service queue analytics.

Transactions arrive at rate ``lambda``. A miner works for an ``Exp(mu2)``
time, takes ``min(b, |Q|)`` transactions into a block and then spends an
``Exp(mu1)`` propagation delay during which nothing else is mined. The state
is ``(i, j)`` with ``i = |B|`` the size of the block in flight (the phase)
and ``j = |Q|`` the mempool backlog (the level). The generator is of
GI/M/1 type: the level rises by one per arrival and falls by up to ``b``
when a block is mined.

The module also holds the closed-form throughput limits under no attack,
under an empty-block attack and under the selfish queue-service attack.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import ParameterDomainError, SelfishDominates, TruncationFailure, Unstable
from .params import ChainParams, NetworkModel

__all__ = [
    "QueueSpec",
    "LevelBlocks",
    "QueueSteadyState",
    "stability_threshold",
    "lambda0_design",
    "lambda1_empty_block_attack",
    "selfish_honest_fraction",
    "lambda2_selfish_attack",
    "lambda2_for",
    "generator_blocks",
    "truncated_generator",
    "queue_steady_state",
    "queue_steady_state_rmatrix",
]

DEFAULT_QUEUE_TOL = 1e-12
MAX_STATES = 1_000_000


@dataclass(frozen=True)
class QueueSpec:
    """Block capacity ``b``, arrival rate ``lam`` and the two service rates."""

    b: int
    lam: float
    mu1: float
    mu2: float

    def __post_init__(self) -> None:
        if int(self.b) != self.b or self.b < 1:
            raise ParameterDomainError(f"block size b must be a positive integer, got {self.b}")
        object.__setattr__(self, "b", int(self.b))
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ParameterDomainError(f"arrival rate must be finite and nonnegative, got {self.lam}")
        for name in ("mu1", "mu2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterDomainError(f"{name} must be finite and positive, got {v}")

    @property
    def threshold(self) -> float:
        return stability_threshold(self.b, self.mu1, self.mu2)

    @property
    def is_stable(self) -> bool:
        return self.lam < self.threshold


def stability_threshold(b: int, mu1: float, mu2: float) -> float:
    """Largest sustainable arrival rate, ``b mu1 mu2 / (mu1 + mu2)``.

    A batch of ``b`` transactions needs one mining time and one propagation
    delay, so arrivals must come slower than ``b`` per ``1/mu1 + 1/mu2``.
    ``mu1 = inf`` gives the delay-free limit ``b mu2``.
    """
    if b < 1:
        raise ParameterDomainError(f"b must be at least 1, got {b}")
    if not (mu1 > 0 and mu2 > 0):
        raise ParameterDomainError("mu1 and mu2 must be positive")
    if math.isinf(mu1):
        return b * mu2
    return b * mu1 * mu2 / (mu1 + mu2)


def lambda0_design(b: int, net: NetworkModel, kappa_bar: float) -> float:
    """Sustainable rate when the mining rate is set to ``kappa_bar * g(b)``.

    ``g(b) = 1/(b/c + delta0)``, which gives ``b c/(b + delta0 c) * kappa_bar/(1 + kappa_bar)``.
    """
    if not kappa_bar > 0:
        raise ParameterDomainError(f"kappa_bar must be positive, got {kappa_bar}")
    capacity = b * net.rate(b)
    if math.isinf(kappa_bar):
        return capacity
    return capacity * kappa_bar / (1.0 + kappa_bar)


def _attacked_rate(b: int, mu1: float, kappa_bar: float, share: float) -> float:
    x = share * kappa_bar
    return b * mu1 * x / (1.0 + x)


def lambda1_empty_block_attack(b: int, mu1: float, kappa_bar: float, alpha: float) -> float:
    """Sustainable rate when the adversary mines empty blocks in the open.

    Only the honest share of blocks serves the queue, so the effective mining
    rate is ``alpha mu2``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ParameterDomainError(f"alpha must lie in (0, 1], got {alpha}")
    return _attacked_rate(b, mu1, kappa_bar, alpha)


def selfish_honest_fraction(p: ChainParams) -> float:
    """Honest share of the longest chain under the selfish queue-service attack.

    ``alpha' = pi / (1 - pi rho')`` with ``pi = 3 - 1/sigma' - 1/alpha`` the
    stationary mass of the no-private-chain state. At ``kappa = 0`` this is
    ``(alpha - beta)/alpha``.

    Raises
    ------
    SelfishDominates
        If ``pi <= 0``: the private chain grows without bound and no honest
        block survives.
    """
    pi = p.pi0_lower
    if not pi > 0.0:
        raise SelfishDominates(
            f"selfish miner dominates at alpha={p.alpha:g}, kappa={p.kappa:g} (pi = {pi:.6g})"
        )
    return pi / (1.0 - pi * p.rho_prime)


def lambda2_selfish_attack(b: int, mu1: float, kappa_bar: float, alpha_prime: float) -> float:
    """Sustainable rate under the selfish queue-service attack.

    The queue behaves like an attack-free one with mining rate ``alpha' mu2``.
    """
    if not 0.0 <= alpha_prime <= 1.0:
        raise ParameterDomainError(f"alpha_prime must lie in [0, 1], got {alpha_prime}")
    return _attacked_rate(b, mu1, kappa_bar, alpha_prime)


def lambda2_for(p: ChainParams, b: int) -> tuple[float, float]:
    """``(lambda2, alpha')`` at the fork rate of ``p``; both zero if the attacker dominates."""
    try:
        ap = selfish_honest_fraction(p)
    except SelfishDominates:
        return 0.0, 0.0
    return lambda2_selfish_attack(b, p.mu1, p.kappa, ap), ap


@dataclass(frozen=True, eq=False)
class LevelBlocks:
    """Level blocks of the generator, each ``(b+1) x (b+1)`` and indexed by phase.

    ``a0`` moves up one level, ``a1`` stays, ``ab`` moves down ``b`` levels.
    ``boundary[j]`` holds the transitions from level ``j`` to level 0 for
    ``j = 0..b`` (``boundary[0]`` is the level-0 diagonal block).
    """

    a0: np.ndarray
    a1: np.ndarray
    ab: np.ndarray
    boundary: tuple[np.ndarray, ...]


def generator_blocks(q: QueueSpec) -> LevelBlocks:
    """Dense level blocks for ``q``; meant for small ``b`` and for tests."""
    n = q.b + 1
    a0 = q.lam * np.eye(n)
    a1 = np.zeros((n, n))
    a1[0, 0] = -(q.lam + q.mu2)
    a1[np.arange(1, n), np.arange(1, n)] = -(q.lam + q.mu1)
    a1[1:, 0] = q.mu1
    ab = np.zeros((n, n))
    ab[0, q.b] = q.mu2
    b0 = a1.copy()
    b0[0, 0] = -q.lam
    boundary = [b0]
    for i in range(1, n):
        bi = np.zeros((n, n))
        bi[0, i] = q.mu2
        boundary.append(bi)
    return LevelBlocks(a0=a0, a1=a1, ab=ab, boundary=tuple(boundary))


def truncated_generator(q: QueueSpec, levels: int) -> sparse.csr_matrix:
    """Generator on levels ``0..levels-1`` with arrivals blocked at the top.

    State ``(i, j)`` sits at index ``j (b+1) + i``.
    """
    b, n = q.b, q.b + 1
    size = n * levels
    j = np.repeat(np.arange(levels), n)
    i = np.tile(np.arange(n), levels)
    idx = j * n + i
    rows, cols, vals = [], [], []

    up = j < levels - 1
    rows.append(idx[up])
    cols.append(idx[up] + n)
    vals.append(np.full(up.sum(), q.lam))

    # propagation finished: (i, j) -> (0, j)
    delay = i > 0
    rows.append(idx[delay])
    cols.append(j[delay] * n)
    vals.append(np.full(delay.sum(), q.mu1))

    # block mined: (0, j) -> (min(b, j), j - min(b, j))
    mine = (i == 0) & (j > 0)
    take = np.minimum(b, j[mine])
    rows.append(idx[mine])
    cols.append((j[mine] - take) * n + take)
    vals.append(np.full(mine.sum(), q.mu2))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    out_rate = np.bincount(rows, weights=vals, minlength=size)
    rows = np.concatenate([rows, np.arange(size)])
    cols = np.concatenate([cols, np.arange(size)])
    vals = np.concatenate([vals, -out_rate])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


@dataclass(frozen=True, eq=False)
class QueueSteadyState:
    """Stationary law ``pi[i, j]`` over phase ``i`` and backlog level ``j``."""

    pi: np.ndarray
    J_max: int
    residual: float
    tail_mass: float
    spec: QueueSpec

    @property
    def level_marginal(self) -> np.ndarray:
        """``P(|Q| = j)`` for ``j = 0..J_max``."""
        return self.pi.sum(axis=0)

    def mean_backlog(self) -> float:
        """Time-averaged mempool size (truncated part)."""
        m = self.level_marginal
        return float(np.dot(np.arange(m.size), m))

    def to_csv(self, fh: TextIO | None = None) -> str | None:
        """Write nonzero ``i,j,probability`` rows; return text if ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["i", "j", "probability"])
        ii, jj = np.nonzero(self.pi)
        order = np.lexsort((ii, jj))
        for i, j in zip(ii[order], jj[order]):
            writer.writerow([int(i), int(j), repr(float(self.pi[i, j]))])
        if fh is None:
            return out.getvalue()
        return None


def _check_stable(q: QueueSpec) -> None:
    thr = q.threshold
    if not q.lam < thr:
        raise Unstable(f"arrival rate {q.lam:g} is not below the stability threshold {thr:g}")


def _lumped_generator(q: QueueSpec, levels: int) -> sparse.csr_matrix:
    # Phases 1..b leave at the same rates to the same targets, so they lump
    # into one delay phase: state (0, j) -> 2j, (delay, j) -> 2j + 1.
    j = np.arange(levels)
    rows, cols, vals = [], [], []
    for ph in (0, 1):
        up = j[:-1]
        rows.append(2 * up + ph)
        cols.append(2 * (up + 1) + ph)
        vals.append(np.full(up.size, q.lam))
    rows.append(2 * j + 1)
    cols.append(2 * j)
    vals.append(np.full(levels, q.mu1))
    jm = j[1:]
    rows.append(2 * jm)
    cols.append(2 * (jm - np.minimum(q.b, jm)) + 1)
    vals.append(np.full(jm.size, q.mu2))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    size = 2 * levels
    out_rate = np.bincount(rows, weights=vals, minlength=size)
    rows = np.concatenate([rows, np.arange(size)])
    cols = np.concatenate([cols, np.arange(size)])
    vals = np.concatenate([vals, -out_rate])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


def _stationary(gen: sparse.csr_matrix) -> np.ndarray:
    size = gen.shape[0]
    # pi Q = 0 with one balance equation swapped for the normalisation
    lhs = gen.T.tolil()
    lhs[0, :] = np.ones(size)
    rhs = np.zeros(size)
    rhs[0] = 1.0
    x = np.maximum(splinalg.spsolve(lhs.tocsc(), rhs), 0.0)
    return x / x.sum()


def _expand_phases(q: QueueSpec, lumped: np.ndarray, levels: int) -> np.ndarray:
    """Split the delay phase back into block sizes ``1..b``.

    A block of ``i < b`` transactions can only be mined from level ``i`` and
    lands at level 0; afterwards its level rises with each arrival until the
    delay ends, a geometric profile. Size ``b`` takes whatever is left.
    """
    mining = lumped[0::2]
    delay = lumped[1::2]
    pi = np.zeros((q.b + 1, levels))
    pi[0] = mining
    if q.b > 1:
        stay = q.lam / (q.lam + q.mu1)
        prof = np.empty(levels)
        prof[:-1] = q.mu2 / (q.lam + q.mu1) * stay ** np.arange(levels - 1)
        # arrivals are blocked at the top level, so only mu1 drains it
        prof[-1] = prof[-2] * q.lam / q.mu1 if levels > 1 else q.mu2 / q.mu1
        sizes = np.arange(1, min(q.b, levels))
        pi[sizes] = mining[sizes, None] * prof[None, :]
    pi[q.b] = np.maximum(delay - pi[1 : q.b].sum(axis=0), 0.0)
    return pi


def _solve_truncated(q: QueueSpec, levels: int) -> tuple[np.ndarray, float]:
    lumped = _stationary(_lumped_generator(q, levels))
    pi = _expand_phases(q, lumped, levels)
    flat = pi.T.reshape(-1)
    residual = float(np.abs(truncated_generator(q, levels).T @ flat).max())
    return pi, residual


_NOISE = 1e-13  # window masses below this are rounding noise of the solve


def _tail_beyond(marginal: np.ndarray, window: int) -> tuple[float, float]:
    """Mass in the top window and a geometric extrapolation of the mass beyond it.

    The decay ratio is read from the deepest pair of adjacent windows that
    still sit above the rounding floor of the solve.
    """
    n = marginal.size // window
    sums = marginal[marginal.size - n * window :].reshape(n, window).sum(axis=1)
    top = float(sums[-1])
    if n < 2:
        return top, math.inf
    above = np.flatnonzero(sums > _NOISE)
    if above.size == 0 or above[-1] == 0:
        return top, 0.0 if top <= 0.0 else top
    last = int(above[-1])
    r = float(sums[last] / sums[last - 1])
    if not r < 1.0:
        return top, math.inf
    return top, float(sums[last]) * r ** (n - last) / (1.0 - r)


def queue_steady_state(
    q: QueueSpec,
    tol: float = DEFAULT_QUEUE_TOL,
    levels: int | None = None,
    max_states: int = MAX_STATES,
) -> QueueSteadyState:
    """Stationary distribution by level truncation and a sparse solve.

    Phases ``1..b`` have identical exit rates, so the solve runs on a lumped
    two-phase chain and the block-size split is restored afterwards. The
    number of levels doubles until both the probability of the top
    ``b + 1`` levels and the geometric extrapolation of the mass beyond the
    truncation fall below ``tol``. The reported ``pi`` is scaled by
    ``1 - tail_mass`` so that the two together sum to one.

    Raises
    ------
    Unstable
        If ``q.lam`` is at or above the stability threshold.
    TruncationFailure
        If ``max_states`` is reached first.
    """
    _check_stable(q)
    n = q.b + 1
    window = n
    cap = max(max_states // n, 1)
    if levels is None:
        levels = max(8 * n, 64)
    levels = min(levels, cap)
    while True:
        pi, residual = _solve_truncated(q, levels)
        top, beyond = _tail_beyond(pi.sum(axis=0), window)
        if levels >= 3 * window and top < tol and beyond < tol:
            break
        if levels >= cap:
            raise TruncationFailure(
                f"tail mass still {max(top, beyond):.3g} at {levels} levels ({levels * n} states)"
            )
        levels = min(2 * levels, cap)
    pi *= 1.0 - beyond
    return QueueSteadyState(pi=pi, J_max=levels - 1, residual=residual, tail_mass=beyond, spec=q)


def _solve_r(blocks: LevelBlocks, b: int, tol: float, max_iter: int) -> np.ndarray:
    # R = -A0 (A1 + R^b Ab)^-1 converges much faster than R = -(A0 + R^(b+1) Ab) A1^-1
    a0, a1, ab = blocks.a0, blocks.a1, blocks.ab
    r = np.zeros_like(a0)
    for _ in range(max_iter):
        nxt = -a0 @ np.linalg.inv(a1 + np.linalg.matrix_power(r, b) @ ab)
        if np.abs(nxt - r).max() < tol:
            return nxt
        r = nxt
    raise TruncationFailure(f"R iteration did not converge in {max_iter} steps")


def queue_steady_state_rmatrix(
    q: QueueSpec, levels: int | None = None, tol: float = 1e-15, max_iter: int = 100_000
) -> QueueSteadyState:
    """Matrix-geometric solution ``pi_j = pi_0 R^j``.

    ``R`` is the minimal solution of ``A0 + R A1 + R^(b+1) Ab = 0``, found
    by fixed-point iteration from zero. Every level ``j >= 1`` sees the same
    blocks, so the form holds from level one on, and ``pi_0`` solves
    ``pi_0 (B0 + sum_j R^j B_j) = 0`` with ``pi_0 (I - R)^-1 1 = 1``.
    Practical for small ``b`` only; used to cross-check the truncation.
    """
    _check_stable(q)
    blocks = generator_blocks(q)
    n = q.b + 1
    r = _solve_r(blocks, q.b, tol, max_iter)
    m = blocks.boundary[0].copy()
    rp = np.eye(n)
    for j in range(1, n):
        rp = rp @ r
        m += rp @ blocks.boundary[j]
    norm = np.linalg.solve(np.eye(n) - r, np.ones(n))
    # replace one balance equation by the normalisation
    lhs = m.T.copy()
    lhs[0, :] = norm
    rhs = np.zeros(n)
    rhs[0] = 1.0
    pi0 = np.linalg.solve(lhs, rhs)

    if levels is None:
        levels = max(8 * n, 64)
    pis = np.empty((levels, n))
    row = pi0
    for j in range(levels):
        pis[j] = row
        row = row @ r
    # mass beyond the kept levels: pi_L (I - R)^-1 1
    tail = float(row @ norm)
    pi = pis.T
    gen = truncated_generator(q, levels)
    flat = pis.reshape(-1)
    bal = gen.T @ flat
    # the top level's balance is distorted by truncation; measure the rest
    residual = float(np.abs(bal[: (levels - 1) * n]).max())
    return QueueSteadyState(pi=pi, J_max=levels - 1, residual=residual, tail_mass=max(tail, 0.0), spec=q)
