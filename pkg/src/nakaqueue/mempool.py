"""Safety bound for a transaction that waits in a backlogged mempool.

With ``j`` transactions ahead of it the target enters the
``(j // b + 1)``-th honest block. While it waits, the adversary's lead moves
between honest publications according to the inter-jumper count ``C``: a
lead of ``i >= 1`` becomes ``i - 1 + C``. From lead zero the adversary's
blocks may all have arrived during the delay of the honest block and so sit
on top of it, which shifts the row; see :func:`lead_chain`.

The bound weights the usual confirmation-plus-race tail at each lead
``D_m`` by the probability that the transaction lands in block ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dist
from .dist import DEFAULT_TOL
from .errors import ParameterDomainError
from .params import ChainParams
from .queue import QueueSpec, QueueSteadyState, queue_steady_state
from .seclat import BoundKind, confirmation_dist, inter_jumper_dist, lead_distribution

__all__ = [
    "InclusionDist",
    "LeadChain",
    "MempoolReport",
    "inclusion_probabilities",
    "lead_chain",
    "general_safety_upper",
    "general_safety_report",
]


@dataclass(frozen=True, eq=False)
class InclusionDist:
    """``probs[m - 1] = P(tx in the m-th honest block)`` plus the cut-off mass."""

    probs: np.ndarray
    tail_mass: float

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0):
            raise ParameterDomainError("inclusion probabilities must be a non-empty nonnegative vector")
        if abs(probs.sum() + self.tail_mass - 1.0) > 1e-9:
            raise ParameterDomainError("inclusion probabilities do not sum to one")
        object.__setattr__(self, "probs", probs)


def inclusion_probabilities(
    ss: QueueSteadyState, b: int | None = None, tol: float = DEFAULT_TOL
) -> InclusionDist:
    """Block index at which an arriving transaction is served.

    Arrivals are Poisson, so they see the time-stationary backlog. Block
    ``m`` collects backlog levels ``(m-1) b .. m b - 1`` over all phases.
    """
    b = ss.spec.b if b is None else int(b)
    if b < 1:
        raise ParameterDomainError(f"b must be at least 1, got {b}")
    marginal = ss.level_marginal
    pad = (-marginal.size) % b
    per_block = np.concatenate([marginal, np.zeros(pad)]).reshape(-1, b).sum(axis=1)
    total = per_block.sum() + ss.tail_mass
    cum = np.cumsum(per_block)
    hit = np.flatnonzero(cum >= total - tol)
    keep = int(hit[0]) + 1 if hit.size else per_block.size
    probs = per_block[:keep]
    return InclusionDist(probs=probs, tail_mass=max(0.0, 1.0 - float(probs.sum())))


@dataclass(frozen=True, eq=False)
class LeadChain:
    """Lead transitions between honest publications, truncated at ``l_max``.

    Row ``i >= 1`` is ``P_C`` shifted to start at ``i - 1``; row 0 is the
    adjusted ``P'_C``. Mass that would leave ``0..l_max`` goes to an
    absorbing remainder state, which the bound counts as a violation.
    """

    pc: np.ndarray
    pc_prime: np.ndarray
    l_max: int

    @property
    def matrix(self) -> np.ndarray:
        """Dense ``(l_max+1) x (l_max+2)`` matrix; the last column is the remainder."""
        n = self.l_max + 1
        out = np.zeros((n, n + 1))
        for i in range(n):
            row = self.pc_prime if i == 0 else self.pc
            start = 0 if i == 0 else i - 1
            stop = min(n, start + row.size)
            out[i, start:stop] = row[: stop - start]
            out[i, n] = max(0.0, 1.0 - out[i, :n].sum())
        return out

    def step(self, d: np.ndarray) -> tuple[np.ndarray, float]:
        """Push a lead vector over ``0..l_max`` through one honest publication.

        Returns the new vector and the probability that left the range.
        """
        n = self.l_max + 1
        out = np.zeros(n)
        head = d[0] * self.pc_prime[:n]
        out[: head.size] += head
        if d.size > 1:
            body = np.convolve(d[1:], self.pc)[:n]
            out[: body.size] += body
        lost = max(0.0, float(d.sum()) - float(out.sum()))
        return out, lost


def lead_chain(p: ChainParams, tol: float = DEFAULT_TOL, l_max: int | None = None) -> LeadChain:
    """Build the between-publication lead chain.

    ``P'_C(i) = P_C(i+1) + alpha sigma (rho^i - rho^(i+1))``. Since
    ``sum P_C(i+1) = 1 - alpha sigma`` and the second part telescopes to
    ``alpha sigma``, the row sums to one.
    """
    pc_pmf = inter_jumper_dist(p, BoundKind.UPPER, tol)
    pc = np.asarray(pc_pmf.probs)
    i = np.arange(pc.size)
    shifted = np.append(pc[1:], 0.0)
    pc_prime = shifted + p.alpha * p.sigma * (p.rho**i - p.rho ** (i + 1))
    if l_max is None:
        l_max = 4 * pc.size
    if l_max < 1:
        raise ParameterDomainError(f"l_max must be at least 1, got {l_max}")
    return LeadChain(pc=pc, pc_prime=pc_prime, l_max=int(l_max))


@dataclass(frozen=True, eq=False)
class MempoolReport:
    """Result of :func:`general_safety_report`.

    ``terms[m - 1]`` is ``P(D_m + S_k + M >= k)``; ``monotone`` records
    whether those terms are nonincreasing in ``m`` up to truncation noise.
    """

    p_value: float
    terms: np.ndarray
    inclusion: InclusionDist
    absorbed: float
    monotone: bool


def _survival(x: dist.Pmf, upto: int) -> np.ndarray:
    # sf[t] = P(X >= t) for t = 0..upto, with the tail counted as exceedance
    sf = np.empty(upto + 1)
    for t in range(upto + 1):
        sf[t] = dist.tail_prob(x, t)
    return sf


def general_safety_report(
    p: ChainParams,
    q: QueueSpec,
    k: int,
    tol: float = DEFAULT_TOL,
    steady: QueueSteadyState | None = None,
    l_max: int | None = None,
) -> MempoolReport:
    """Upper bound on the violation probability with mempool waiting.

    The mass of blocks beyond the truncation in ``m`` is charged at the
    largest per-block term seen, which is the ``m = 1`` term whenever the
    terms decrease.
    """
    if int(k) != k or k < 0:
        raise ParameterDomainError(f"k must be a nonnegative integer, got {k}")
    k = int(k)
    if steady is None:
        steady = queue_steady_state(q)
    incl = inclusion_probabilities(steady, q.b, tol)
    if k == 0:
        terms = np.ones(incl.probs.size)
        return MempoolReport(p_value=1.0, terms=terms, inclusion=incl, absorbed=0.0, monotone=True)

    lead = lead_distribution(p, BoundKind.UPPER, tol, min_len=k + 1)
    rest = dist.convolve(confirmation_dist(p, k, BoundKind.UPPER, tol), lead)
    sf = _survival(rest, k)

    chain = lead_chain(p, tol, l_max)
    n = max(chain.l_max + 1, len(lead))
    if n > chain.l_max + 1:
        chain = LeadChain(pc=chain.pc, pc_prime=chain.pc_prime, l_max=n - 1)
    d = np.zeros(n)
    d[: len(lead)] = lead.probs
    absorbed = lead.tail_mass

    def violation(vec: np.ndarray, extra: float) -> float:
        # leads of k or more need nothing further; below that use P(rest >= k - x)
        x = np.arange(vec.size)
        need = np.clip(k - x, 0, k)
        return float(np.dot(vec, sf[need])) + extra

    terms = np.empty(incl.probs.size)
    for m in range(incl.probs.size):
        if m > 0:
            d, lost = chain.step(d)
            absorbed += lost
        terms[m] = min(1.0, violation(d, absorbed))
    value = float(np.dot(incl.probs, terms)) + incl.tail_mass * float(terms.max())
    # each step may charge up to one truncated P_C tail to the remainder
    monotone = bool(np.all(np.diff(terms) <= 2.0 * tol + 1e-15))
    return MempoolReport(
        p_value=min(1.0, value), terms=terms, inclusion=incl, absorbed=absorbed, monotone=monotone
    )


def general_safety_upper(
    p: ChainParams, q: QueueSpec, k: int, tol: float = DEFAULT_TOL, steady: QueueSteadyState | None = None
) -> float:
    """Probability form of :func:`general_safety_report`."""
    return general_safety_report(p, q, k, tol, steady).p_value
