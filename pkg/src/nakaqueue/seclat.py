"""Safety-violation bounds for the rigged private attack.

Three independent ingredients make up the bound at confirmation depth ``k``:

* the adversary's lead when the target transaction arrives (the stationary
  law of an M/G/1-type birth-death chain, obtained by Ramaswami's recursion),
* the number of adversarial and rigged blocks mined while ``k`` honest
  jumpers are published,
* the largest deficit the adversary can still recover afterwards, which has
  the same law as the lead.

The violation probability is ``P(lead + conf + post >= k)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import dist
from .dist import DEFAULT_TOL, MAX_SUPPORT, Pmf
from .errors import NotPositiveRecurrent, ParameterDomainError, PmfOverflowError, ThresholdUnreachable
from .params import ChainParams, derive

__all__ = [
    "BoundKind",
    "SafetyReport",
    "lead_distribution",
    "inter_jumper_dist",
    "confirmation_dist",
    "safety_violation",
    "fault_tolerance_beta_max",
    "tolerates_adversary",
    "ultimate_beta_max",
    "max_safe_kappa",
    "recovery_ratio",
]


class BoundKind(enum.Enum):
    """Which side of the true violation probability to compute.

    ``UPPER`` uses the rigged-model rates ``(sigma, rho)``. ``LOWER`` replaces
    them with ``(sigma_prime, rho_prime)``, where only adversarial blocks are
    counted during an honest block's delay.
    """

    UPPER = "upper"
    LOWER = "lower"

    @classmethod
    def parse(cls, value: "BoundKind | str") -> "BoundKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterDomainError(f"kind must be 'upper' or 'lower', got {value!r}") from None


def _rates(p: ChainParams, kind: BoundKind) -> tuple[float, float]:
    if kind is BoundKind.UPPER:
        return p.sigma, p.rho
    return p.sigma_prime, p.rho_prime


def _pi0(p: ChainParams, kind: BoundKind) -> float:
    # 3 - 1/sigma - 1/alpha, written without the cancellation
    return p.pi0_upper if kind is BoundKind.UPPER else p.pi0_lower


@dataclass(frozen=True, eq=False)
class SafetyReport:
    """Result of :func:`safety_violation`."""

    p_value: float
    kind: BoundKind
    k: int
    truncation_error: float
    lead: Pmf
    conf: Pmf
    post: Pmf


def lead_distribution(
    p: ChainParams,
    kind: BoundKind | str = BoundKind.UPPER,
    tol: float = DEFAULT_TOL,
    min_len: int = 1,
    max_len: int = MAX_SUPPORT,
) -> Pmf:
    """Stationary law of the adversary's lead.

    The chain moves up by one when the adversary mines a block and, when an
    honest jumper is mined, by ``j - 1`` where ``j`` is the number of blocks
    mined during its delay (``j`` from zero). The tail sums of the level
    increments are ``a_i = alpha r^i + beta [i <= 2]`` from a positive level
    and ``b_i = alpha r^i + beta [i <= 1]`` from level zero, with
    ``r = rho`` (or ``rho_prime`` for the lower bound). Ramaswami's recursion
    then gives every ``pi_i`` from ``pi_0 = 3 - 1/sigma - 1/alpha``.

    Raises
    ------
    NotPositiveRecurrent
        If ``pi_0 <= 0``; for the upper bound this is ``alpha <= 1/(2 - kappa)``.
    """
    kind = BoundKind.parse(kind)
    sigma, rho = _rates(p, kind)
    alpha, beta = p.alpha, p.beta
    pi0 = _pi0(p, kind)
    if not pi0 > 0.0:
        raise NotPositiveRecurrent(
            f"lead chain is not positive recurrent (pi_0 = {pi0:.6g}) at "
            f"alpha={alpha:g}, kappa={p.kappa:g}"
        )
    denom = alpha * sigma  # 1 - a_1

    # Running state carried across chunks: the geometric part of
    # sum_{j<i} pi_j a_{i+1-j}, and the previous term for the beta part.
    state = {"g": 0.0, "prev": pi0, "rho_pow": 1.0}

    def terms(start: int, stop: int) -> np.ndarray:
        out = np.empty(stop - start)
        g, prev, rho_pow = state["g"], state["prev"], state["rho_pow"]
        for n, i in enumerate(range(start, stop)):
            if i == 0:
                out[n] = pi0
                continue
            rho_pow *= rho
            b_bar = alpha * rho_pow + (beta if i == 1 else 0.0)
            x = (pi0 * b_bar + alpha * g + (beta * prev if i >= 2 else 0.0)) / denom
            out[n] = x
            g = rho * g + rho * rho * x
            prev = x
        state.update(g=g, prev=prev, rho_pow=rho_pow)
        return out

    return dist.materialize(terms, tol=tol, min_len=min_len, max_len=max_len)


def inter_jumper_dist(
    p: ChainParams, kind: BoundKind | str = BoundKind.UPPER, tol: float = DEFAULT_TOL
) -> Pmf:
    """Blocks the adversary gains between two consecutive jumper publications.

    ``P(C = c) = alpha sigma sum_{j=0}^{c} beta^(c-j) rho^j``, evaluated
    through ``P(C = c) = beta P(C = c-1) + alpha sigma rho^c``. That form has
    no division by ``beta``, so ``beta = 0`` and ``rho = beta`` need no
    special handling.
    """
    kind = BoundKind.parse(kind)
    sigma, rho = _rates(p, kind)
    alpha, beta = p.alpha, p.beta
    state = {"prev": 0.0, "rho_pow": 1.0}

    def terms(start: int, stop: int) -> np.ndarray:
        out = np.empty(stop - start)
        prev, rho_pow = state["prev"], state["rho_pow"]
        for n in range(stop - start):
            prev = beta * prev + alpha * sigma * rho_pow
            rho_pow *= rho
            out[n] = prev
        state.update(prev=prev, rho_pow=rho_pow)
        return out

    return dist.materialize(terms, tol=tol)


def _neg_binomial(k: int, success: float, tol: float) -> Pmf:
    """Failures before the ``k``-th success, by running-ratio products."""
    fail = 1.0 - success
    if fail == 0.0:
        return dist.point_mass(0)
    log_u0 = k * math.log(success)
    if log_u0 < -700.0:
        raise PmfOverflowError(f"success**k underflows for k={k}, success={success:g}")
    state = {"u": math.exp(log_u0)}

    def terms(start: int, stop: int) -> np.ndarray:
        out = np.empty(stop - start)
        u = state["u"]
        for n, m in enumerate(range(start, stop)):
            if m > 0:
                u *= (k - 1 + m) / m * fail
            out[n] = u
        state["u"] = u
        return out

    # P(X >= n) as a regularized incomplete beta; accurate where 1 - sum is not
    return dist.materialize(terms, tol=tol, tail=lambda n: special.betainc(n, k, fail))


def confirmation_dist(
    p: ChainParams, k: int, kind: BoundKind | str = BoundKind.UPPER, tol: float = DEFAULT_TOL
) -> Pmf:
    """Adversarial and rigged blocks mined during the ``k``-jumper confirmation window.

    Closed form::

        P(S = s) = alpha^k sigma^k beta^s
                   * sum_{n=0}^{s} C(k-1+n, n) C(k-1+s-n, s-n) (rho/beta)^n

    The inner sum is the convolution of ``alpha^k C(k-1+m, m) beta^m`` with
    ``sigma^k C(k-1+n, n) rho^n``. Each factor is a negative binomial law and
    is built by running-ratio products, so nothing divides by ``beta``.
    """
    kind = BoundKind.parse(kind)
    if int(k) != k or k < 0:
        raise ParameterDomainError(f"k must be a nonnegative integer, got {k}")
    k = int(k)
    if k == 0:
        return dist.point_mass(0)
    sigma, _ = _rates(p, kind)
    adv = _neg_binomial(k, p.alpha, tol / 2)
    rigged = _neg_binomial(k, sigma, tol / 2)
    return dist.convolve(adv, rigged)


def safety_violation(
    p: ChainParams, k: int, kind: BoundKind | str = BoundKind.UPPER, tol: float = DEFAULT_TOL
) -> SafetyReport:
    """Probability that a transaction confirmed at depth ``k`` is later displaced.

    For the upper bound the truncated tail mass is counted as violation, so
    the reported value stays an upper bound. For the lower bound it is left
    out.
    """
    kind = BoundKind.parse(kind)
    if int(k) != k or k < 0:
        raise ParameterDomainError(f"k must be a nonnegative integer, got {k}")
    k = int(k)
    lead = lead_distribution(p, kind, tol, min_len=k + 1)
    conf = confirmation_dist(p, k, kind, tol)
    total = dist.convolve(dist.convolve(lead, conf), lead)
    if kind is BoundKind.UPPER:
        value = dist.tail_prob(total, k)
    else:
        value = dist.tail_prob(total, k) - total.tail_mass
    return SafetyReport(
        p_value=min(1.0, max(0.0, value)),
        kind=kind,
        k=k,
        truncation_error=total.tail_mass,
        lead=lead,
        conf=conf,
        post=lead,
    )


def fault_tolerance_beta_max(kappa: float) -> float:
    """Largest adversarial fraction for which the upper bound vanishes as ``k`` grows.

    Positive recurrence needs ``alpha > 1/(2 - kappa)``, so the answer is
    ``(1 - kappa)/(2 - kappa)``. For ``kappa >= 1`` no adversary is tolerated
    and 0 is returned; check :func:`tolerates_adversary` to tell the cases
    apart.
    """
    kappa = float(kappa)
    if not kappa >= 0 or math.isnan(kappa):
        raise ParameterDomainError(f"kappa must be nonnegative, got {kappa}")
    if not tolerates_adversary(kappa):
        return 0.0
    return (1.0 - kappa) / (2.0 - kappa)


def tolerates_adversary(kappa: float) -> bool:
    """Whether any positive adversarial fraction keeps the lead chain recurrent."""
    return kappa < 1.0


def ultimate_beta_max(kappa: float) -> float:
    """Root in ``(0, 1/2]`` of ``kappa b^2 - (2 + kappa) b + 1 = 0``.

    This is the adversarial fraction at which ``beta = (1 - beta)/(1 + (1 - beta) kappa)``
    holds with equality. Uses the cancellation-free form
    ``2 / ((2 + kappa) + sqrt((2 + kappa)^2 - 4 kappa))``, which is 1/2 at
    ``kappa = 0``.
    """
    kappa = float(kappa)
    if not kappa >= 0 or math.isinf(kappa):
        raise ParameterDomainError(f"kappa must be finite and nonnegative, got {kappa}")
    a = 2.0 + kappa
    return 2.0 / (a + math.sqrt(a * a - 4.0 * kappa))


def recovery_ratio(p: ChainParams, kind: BoundKind | str = BoundKind.UPPER) -> float:
    """Root ``z > 1`` of ``E[z^(C-1)] = 1`` for the inter-jumper count ``C``.

    The adversary recovers a deficit of ``h`` blocks with probability at most
    ``z^-h``. Returns ``inf`` when ``C`` is identically zero and ``1.0`` when
    the walk has nonnegative drift (no exponential bound).
    """
    kind = BoundKind.parse(kind)
    sigma, rho = _rates(p, kind)
    beta = p.beta
    if beta / p.alpha + rho / sigma >= 1.0:
        return 1.0
    # (z - 1)(beta rho z^2 - (beta + rho - beta rho) z + alpha sigma) = 0
    qa = beta * rho
    qb = -(beta + rho - beta * rho)
    qc = p.alpha * sigma
    if qa == 0.0:
        if qb == 0.0:
            return math.inf
        return -qc / qb
    disc = qb * qb - 4.0 * qa * qc
    roots = sorted(((-qb - math.sqrt(disc)) / (2 * qa), (-qb + math.sqrt(disc)) / (2 * qa)))
    above = [r for r in roots if r > 1.0]
    return above[0] if above else 1.0


def max_safe_kappa(
    alpha: float,
    k: int,
    p_threshold: float,
    tol: float = DEFAULT_TOL,
    rel_prec: float = 1e-6,
    kappa_floor: float = 1e-12,
    max_len: int = 1_000_000,
) -> float:
    """Largest fork rate whose upper bound at depth ``k`` stays below ``p_threshold``.

    Only ``kappa`` matters, so the bound is evaluated at rates ``(1, kappa)``.
    The search is a bisection in ``log kappa`` between ``kappa_floor`` and the
    recurrence boundary ``2 - 1/alpha`` (less 1e-9). It assumes the bound is
    nondecreasing in ``kappa``. Points whose lead distribution overflows the
    support cap sit next to the boundary, where the bound is close to one, and
    are treated as unsafe.

    Raises
    ------
    ThresholdUnreachable
        If even ``kappa_floor`` violates the threshold.
    """
    if not 0.0 < p_threshold:
        raise ParameterDomainError(f"p_threshold must be positive, got {p_threshold}")
    boundary = 2.0 - 1.0 / alpha
    hi = boundary - 1e-9
    if hi <= kappa_floor:
        raise ThresholdUnreachable(f"alpha={alpha:g} tolerates no positive fork rate")

    def bound(kappa: float) -> float:
        p = derive(alpha, 1.0, kappa)
        lead = lead_distribution(p, BoundKind.UPPER, tol, min_len=k + 1, max_len=max_len)
        conf = confirmation_dist(p, k, BoundKind.UPPER, tol)
        total = dist.convolve(dist.convolve(lead, conf), lead)
        return dist.tail_prob(total, k)

    if bound(kappa_floor) >= p_threshold:
        raise ThresholdUnreachable(
            f"depth k={k} cannot reach p < {p_threshold:g} at alpha={alpha:g} even as kappa -> 0"
        )
    if p_threshold >= 1.0:
        # every recurrent point has a bound strictly below one
        return hi
    lo = kappa_floor
    while hi / lo - 1.0 > rel_prec:
        mid = math.sqrt(lo * hi)
        try:
            safe = bound(mid) < p_threshold
        except (NotPositiveRecurrent, PmfOverflowError):
            safe = False
        if safe:
            lo = mid
        else:
            hi = mid
    return lo
