"""Protocol and adversary parameters.

All rates are per second. ``mu1`` is the rate of the exponential network
delay, ``mu2`` the block mining rate, and ``alpha`` the honest share of the
mining power. Everything else is derived from those three numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ParameterDomainError

__all__ = [
    "ChainParams",
    "NetworkModel",
    "derive",
    "mu1_from_percentile",
    "expected_confirmation_latency",
    "parse_config",
    "load_config",
    "CONFIG_SCHEMA_VERSION",
]

CONFIG_SCHEMA_VERSION = 1
PARAM_KEYS = ("alpha", "mu1", "mu2", "c", "delta0")

_KAPPA_RTOL = 1e-12


def _finite(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterDomainError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(value):
        raise ParameterDomainError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ChainParams:
    """Rates and the fractions derived from them.

    Build instances with :func:`derive`; the constructor only checks that the
    stored fields are mutually consistent.
    """

    alpha: float
    beta: float
    mu1: float
    mu2: float
    kappa: float
    sigma: float
    rho: float
    sigma_prime: float
    rho_prime: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ParameterDomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise ParameterDomainError("mu1 and mu2 must be positive")
        if self.beta != 1.0 - self.alpha:
            raise ParameterDomainError("beta must equal 1 - alpha")
        if self.rho != 1.0 - self.sigma or self.rho_prime != 1.0 - self.sigma_prime:
            raise ParameterDomainError("rho must equal 1 - sigma (and likewise for the primed pair)")
        # rho = 1 - sigma is only resolved to ulp(1), hence the absolute slack
        if abs(self.rho / self.sigma - self.kappa) > _KAPPA_RTOL * self.kappa + 4 * 2.0**-52:
            raise ParameterDomainError("kappa is inconsistent with rho/sigma")
        if self.sigma_prime < self.sigma:
            raise ParameterDomainError("sigma_prime must be at least sigma")

    @property
    def pi0_upper(self) -> float:
        """Stationary mass of a zero lead in the rigged model."""
        return 1.0 - self.kappa - self.beta / self.alpha

    @property
    def pi0_lower(self) -> float:
        """Same quantity with the adversary-only delay rates."""
        return 1.0 - self.kappa * self.beta - self.beta / self.alpha

    def scaled(self, c: float) -> "ChainParams":
        """Return the parameters with both rates multiplied by ``c``."""
        return derive(self.alpha, c * self.mu1, c * self.mu2)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def derive(alpha: float, mu1: float, mu2: float) -> ChainParams:
    """Build a :class:`ChainParams` from the honest fraction and the two rates.

    >>> p = derive(1.0, 1.0, 1.0)
    >>> p.sigma, p.kappa, p.sigma_prime
    (0.5, 1.0, 1.0)
    """
    alpha = _finite("alpha", alpha)
    mu1 = _finite("mu1", mu1)
    mu2 = _finite("mu2", mu2)
    if not 0.0 < alpha <= 1.0:
        raise ParameterDomainError(f"alpha must lie in (0, 1], got {alpha}")
    if mu1 <= 0.0:
        raise ParameterDomainError(f"mu1 must be positive, got {mu1}")
    if mu2 <= 0.0:
        raise ParameterDomainError(f"mu2 must be positive, got {mu2}")
    beta = 1.0 - alpha
    sigma = mu1 / (mu1 + mu2)
    sigma_prime = mu1 / (mu1 + mu2 * beta)
    return ChainParams(
        alpha=alpha,
        beta=beta,
        mu1=mu1,
        mu2=mu2,
        kappa=mu2 / mu1,
        sigma=sigma,
        rho=1.0 - sigma,
        sigma_prime=sigma_prime,
        rho_prime=1.0 - sigma_prime,
    )


@dataclass(frozen=True)
class NetworkModel:
    """Linear propagation-delay model: mean delay ``b / c + delta0`` seconds.

    ``c`` is the network speed in transactions per second and may be
    ``math.inf`` for a size-independent delay.
    """

    c: float
    delta0: float = 0.0

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ParameterDomainError(f"network speed c must be positive, got {self.c}")
        if not (math.isfinite(self.delta0) and self.delta0 >= 0):
            raise ParameterDomainError(f"delta0 must be finite and nonnegative, got {self.delta0}")
        if math.isinf(self.c) and self.delta0 == 0:
            raise ParameterDomainError("an infinitely fast network needs delta0 > 0")

    def delay(self, b: float) -> float:
        """Mean propagation delay of a block holding ``b`` transactions."""
        return b / self.c + self.delta0

    def rate(self, b: float) -> float:
        """Delay rate ``mu1`` for block size ``b``."""
        return 1.0 / self.delay(b)


def mu1_from_percentile(delay_value: float, percentile: float) -> float:
    """Exponential delay rate whose ``percentile`` quantile equals ``delay_value``.

    With a 90th percentile of four seconds this gives ``ln(10) / 4``.
    """
    delay_value = _finite("delay_value", delay_value)
    percentile = _finite("percentile", percentile)
    if delay_value <= 0:
        raise ParameterDomainError(f"delay_value must be positive, got {delay_value}")
    if not 0.0 < percentile < 1.0:
        raise ParameterDomainError(f"percentile must lie in (0, 1), got {percentile}")
    return -math.log1p(-percentile) / delay_value


def expected_confirmation_latency(k: int, mu2: float) -> float:
    """Mean time for ``k`` blocks at mining rate ``mu2``."""
    if int(k) != k or k < 1:
        raise ParameterDomainError(f"k must be a positive integer, got {k}")
    mu2 = _finite("mu2", mu2)
    if mu2 <= 0:
        raise ParameterDomainError(f"mu2 must be positive, got {mu2}")
    return k / mu2


def parse_config(doc: Mapping[str, Any], extra_keys: Iterable[str] = ()) -> dict[str, Any]:
    """Validate a configuration mapping.

    The mapping must carry ``schema: 1``. Keys other than the parameter names
    (``alpha``, ``mu1``, ``mu2``, ``c``, ``delta0``) and ``extra_keys`` are
    rejected. Returns the mapping without the ``schema`` entry.
    """
    if not isinstance(doc, Mapping):
        raise ParameterDomainError("configuration must be a JSON object")
    if "schema" not in doc:
        raise ParameterDomainError("configuration is missing the 'schema' field")
    if doc["schema"] != CONFIG_SCHEMA_VERSION:
        raise ParameterDomainError(f"unsupported configuration schema {doc['schema']!r}")
    allowed = set(PARAM_KEYS) | set(extra_keys) | {"schema"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ParameterDomainError(f"unknown configuration keys: {', '.join(unknown)}")
    return {key: value for key, value in doc.items() if key != "schema"}


def load_config(path: str | Path, extra_keys: Iterable[str] = ()) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterDomainError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, extra_keys)
