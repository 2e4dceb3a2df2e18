"""Truncated probability mass functions on the integers.

A :class:`Pmf` stores a contiguous block of probabilities starting at an
integer ``offset`` together with the mass that was cut off during
truncation. Upper-bound computations add that mass back in; lower-bound
computations leave it out.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from .errors import ParameterDomainError, PmfOverflowError

__all__ = [
    "Pmf",
    "DEFAULT_TOL",
    "MAX_SUPPORT",
    "point_mass",
    "from_probs",
    "materialize",
    "geometric",
    "convolve",
    "tail_prob",
    "total_variation",
]

DEFAULT_TOL = 1e-14
MAX_SUPPORT = 10_000_000
_MASS_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class Pmf:
    """Distribution ``P(X = offset + i) = probs[i]`` plus ``tail_mass`` beyond."""

    offset: int
    probs: np.ndarray
    tail_mass: float
    tol: float

    def __post_init__(self) -> None:
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ParameterDomainError("probs must be a non-empty 1-D array")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ParameterDomainError("probabilities must be finite and nonnegative")
        if probs[-1] <= 0:
            raise ParameterDomainError("last support point must carry positive mass")
        if self.tail_mass < 0 or self.tail_mass > self.tol:
            raise ParameterDomainError(
                f"tail mass {self.tail_mass:.3g} outside [0, tol={self.tol:.3g}]"
            )
        total = float(probs.sum()) + self.tail_mass
        if abs(total - 1.0) > _MASS_SLACK:
            raise ParameterDomainError(f"mass sums to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "offset", int(self.offset))

    def __len__(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.probs.size)

    def __getitem__(self, x: int) -> float:
        i = x - self.offset
        if 0 <= i < self.probs.size:
            return float(self.probs[i])
        return 0.0

    def mean(self) -> float:
        """Mean of the truncated part (ignores the tail)."""
        return float(np.dot(self.support, self.probs))

    def cdf(self, x: int) -> float:
        """``P(X <= x)`` over the truncated part."""
        i = x - self.offset
        if i < 0:
            return 0.0
        return float(self.probs[: i + 1].sum())

    def to_csv(self, fh: TextIO | None = None) -> str | None:
        """Write ``support_point,probability`` rows; return text if ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["support_point", "probability"])
        for x, p in zip(self.support, self.probs):
            writer.writerow([int(x), repr(float(p))])
        if fh is None:
            return out.getvalue()
        return None


def _trim(probs: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(probs > 0)
    if nz.size == 0:
        raise ParameterDomainError("distribution has no positive mass")
    return probs[: nz[-1] + 1]


def point_mass(x: int = 0) -> Pmf:
    return Pmf(offset=int(x), probs=np.ones(1), tail_mass=0.0, tol=0.0)


def from_probs(probs, offset: int = 0, tol: float = 0.0) -> Pmf:
    """Wrap an explicit probability vector; the shortfall from 1 becomes the tail."""
    probs = np.asarray(probs, dtype=np.float64)
    lead = np.flatnonzero(probs > 0)
    if lead.size == 0:
        raise ParameterDomainError("distribution has no positive mass")
    start = int(lead[0])
    probs = _trim(probs[start:])
    tail = max(0.0, 1.0 - float(probs.sum()))
    return Pmf(offset=offset + start, probs=probs, tail_mass=tail, tol=max(tol, tail))


def materialize(
    terms: Callable[[int, int], np.ndarray],
    tol: float = DEFAULT_TOL,
    offset: int = 0,
    min_len: int = 1,
    max_len: int = MAX_SUPPORT,
    chunk: int = 256,
    tail: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Pmf:
    """Evaluate an infinite-support pmf until the kept mass reaches ``1 - tol``.

    ``terms(start, stop)`` must return the probabilities at indices
    ``start .. stop - 1``. Evaluation proceeds in growing chunks and stops at
    half the tolerance, which leaves room for summation rounding.

    When the terms carry relative errors large enough to spoil ``1 - sum``,
    pass a vectorised ``tail(n) = P(X >= n)`` computed independently; it then drives both
    the stopping rule and the reported tail mass.
    """
    if not 0.0 <= tol < 1.0:
        raise ParameterDomainError(f"tol must lie in [0, 1), got {tol}")
    target = 1.0 - 0.5 * tol
    parts: list[np.ndarray] = []
    total = 0.0
    n = 0
    while True:
        block = np.asarray(terms(n, n + chunk), dtype=np.float64)
        cum = total + np.cumsum(block)
        if tail is None:
            hit = np.flatnonzero((cum >= target) | _geometric_done(block, 0.5 * tol))
        else:
            sf = np.asarray(tail(np.arange(n + 1, n + block.size + 1)))
            hit = np.flatnonzero(sf <= 0.5 * tol)
        if hit.size and n + hit[0] + 1 >= min_len:
            cut = max(int(hit[0]) + 1, min_len - n)
            parts.append(block[:cut])
            break
        parts.append(block)
        total = float(cum[-1])
        n += chunk
        if n >= max_len:
            raise PmfOverflowError(f"support exceeds the cap of {max_len} points")
        chunk = min(chunk * 2, 1 << 16)
    probs = _trim(np.concatenate(parts))
    if tail is None:
        rest = max(0.0, 1.0 - float(probs.sum()))
    else:
        rest = float(np.asarray(tail(np.array([probs.size])))[0])
    # rounding in long sums can leave 1 - sum above tol; report what was achieved
    return Pmf(offset=offset, probs=probs, tail_mass=rest, tol=max(tol, rest))


def _geometric_done(block: np.ndarray, limit: float) -> np.ndarray:
    """Flag positions where the terms decay geometrically and the rest is below ``limit``.

    Long recursions lose a few ulps per step, so near-critical laws can stall
    short of ``1 - tol`` in the running sum even though the remaining mass is
    negligible. Their tails are asymptotically geometric, which gives an
    independent estimate ``x r / (1 - r)``.
    """
    out = np.zeros(block.size, dtype=bool)
    if block.size < 3:
        return out
    with np.errstate(divide="ignore", invalid="ignore"):
        r = block[1:] / block[:-1]
        steady = np.abs(r[1:] - r[:-1]) <= 1e-9 * r[1:]
        est = block[2:] * r[1:] / (1.0 - r[1:])
    out[2:] = steady & (r[1:] < 1.0) & (est <= limit) & (block[2:] > 0)
    return out


def geometric(p: float, tol: float = DEFAULT_TOL) -> Pmf:
    """``P(X = n) = p (1 - p)^n`` for ``n >= 0``."""
    if not 0.0 < p <= 1.0:
        raise ParameterDomainError(f"p must lie in (0, 1], got {p}")
    q = 1.0 - p
    return materialize(lambda a, b: p * q ** np.arange(a, b, dtype=np.float64), tol)


def convolve(a: Pmf, b: Pmf, max_len: int = MAX_SUPPORT) -> Pmf:
    """Distribution of the sum of independent draws from ``a`` and ``b``.

    The kept mass of the result is ``(1 - ta)(1 - tb)``, so its tail is
    ``ta + tb - ta tb``; that identity is used instead of re-summing.
    """
    n = len(a) + len(b) - 1
    if n > max_len:
        raise PmfOverflowError(f"convolution support {n} exceeds the cap of {max_len}")
    probs = _trim(np.maximum(np.convolve(a.probs, b.probs), 0.0))
    tail = a.tail_mass + b.tail_mass - a.tail_mass * b.tail_mass
    return Pmf(offset=a.offset + b.offset, probs=probs, tail_mass=tail, tol=a.tol + b.tol)


def tail_prob(x: Pmf, threshold: int) -> float:
    """Conservative ``P(X >= threshold)``: kept mass at or above it plus the tail."""
    i = max(0, threshold - x.offset)
    return float(x.probs[i:].sum()) + x.tail_mass


def total_variation(a: Pmf, b: Pmf) -> float:
    """Total-variation distance, charging both tails as disjoint mass."""
    lo = min(a.offset, b.offset)
    hi = max(a.offset + len(a), b.offset + len(b))
    pa = np.zeros(hi - lo)
    pb = np.zeros(hi - lo)
    pa[a.offset - lo : a.offset - lo + len(a)] = a.probs
    pb[b.offset - lo : b.offset - lo + len(b)] = b.probs
    return 0.5 * float(np.abs(pa - pb).sum()) + 0.5 * (a.tail_mass + b.tail_mass)
