"""Parameter sweeps and the canned table and figure datasets.

A sweep varies one of ``kappa``, ``k``, ``lambda`` or ``beta`` over a grid
while everything else stays at a baseline. Each grid point becomes one CSV
row with a fixed set of columns; columns that were not requested stay empty
and failures are recorded in the ``error`` column instead of dropping the
row.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .dist import DEFAULT_TOL
from .errors import NakaqueueError, ParameterDomainError
from .params import derive, expected_confirmation_latency
from .queue import lambda1_empty_block_attack, lambda2_for, stability_threshold
from .seclat import BoundKind, fault_tolerance_beta_max, safety_violation

__all__ = [
    "COLUMNS",
    "OUTPUTS",
    "AXES",
    "SweepSpec",
    "run_sweep",
    "write_csv",
    "format_value",
    "MU1_BTC",
    "TABLE_RATES",
    "TABLE2_K",
    "TABLE_BETAS",
    "derive_k",
    "table2",
    "table3",
    "fig_bound_vs_k",
    "fig_kappa_sweeps",
    "kappa_grid",
    "TABLE2_COLUMNS",
    "TABLE3_COLUMNS",
    "FIG5_K",
]

COLUMNS = (
    "axis",
    "p_upper",
    "p_lower",
    "latency_s",
    "lambda0",
    "lambda1",
    "lambda2",
    "alpha_prime",
    "beta_max",
    "error",
)
OUTPUTS = COLUMNS[1:-1]
AXES = ("kappa", "k", "lambda", "beta")

MU1_BTC = math.log(10) / 4
TABLE_RATES = (1 / 600, 1 / 90, 1 / 60, 1 / 30)
TABLE_BETAS = (0.1, 0.25, 0.4)
# confirmation depths listed alongside each mining rate
TABLE2_K = {1 / 600: (6, 22, 149), 1 / 90: (7, 23, 166), 1 / 60: (7, 24, 177), 1 / 30: (8, 27, 217)}


@dataclass(frozen=True)
class SweepSpec:
    """One-axis sweep around a baseline ``(alpha, mu1, mu2, k, b)``.

    For the ``lambda`` axis the grid holds target throughputs and the mining
    rate is set so that ``b mu1 kappa/(1 + kappa)`` equals each of them.
    """

    axis: str
    grid: tuple[float, ...]
    alpha: float = 0.9
    mu1: float = MU1_BTC
    mu2: float = 1 / 600
    k: int = 6
    b: int = 4500
    outputs: tuple[str, ...] = OUTPUTS
    tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ParameterDomainError(f"axis must be one of {', '.join(AXES)}, got {self.axis!r}")
        grid = tuple(float(v) for v in self.grid)
        if not grid:
            raise ParameterDomainError("grid must not be empty")
        if any(not math.isfinite(v) for v in grid):
            raise ParameterDomainError("grid values must be finite")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ParameterDomainError("grid must be strictly increasing")
        if self.axis == "k" and any(v != int(v) or v < 0 for v in grid):
            raise ParameterDomainError("k grid values must be nonnegative integers")
        unknown = [c for c in self.outputs if c not in OUTPUTS]
        if unknown:
            raise ParameterDomainError(f"unknown output columns: {', '.join(unknown)}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "outputs", tuple(self.outputs))


def _point(spec: SweepSpec, x: float) -> tuple[float, float, float, int]:
    alpha, mu1, mu2, k = spec.alpha, spec.mu1, spec.mu2, spec.k
    if spec.axis == "kappa":
        mu2 = x * mu1
    elif spec.axis == "k":
        k = int(x)
    elif spec.axis == "beta":
        alpha = 1.0 - x
    else:
        cap = spec.b * mu1
        if not 0.0 < x < cap:
            raise ParameterDomainError(f"throughput {x:g} must lie in (0, b mu1 = {cap:g})")
        mu2 = x / (cap - x) * mu1
    return alpha, mu1, mu2, k


def _row(spec: SweepSpec, x: float) -> dict[str, object]:
    row: dict[str, object] = {"axis": x}
    errors: list[str] = []
    try:
        alpha, mu1, mu2, k = _point(spec, x)
        p = derive(alpha, mu1, mu2)
    except NakaqueueError as exc:
        row["error"] = f"point:{type(exc).__name__}"
        return row

    def put(col: str, fn) -> None:
        if col not in spec.outputs:
            return
        try:
            row[col] = fn()
        except NakaqueueError as exc:
            errors.append(f"{col}:{type(exc).__name__}")

    put("p_upper", lambda: safety_violation(p, k, BoundKind.UPPER, spec.tol).p_value)
    put("p_lower", lambda: safety_violation(p, k, BoundKind.LOWER, spec.tol).p_value)
    put("latency_s", lambda: expected_confirmation_latency(k, mu2) if k >= 1 else 0.0)
    put("lambda0", lambda: stability_threshold(spec.b, mu1, mu2))
    put("lambda1", lambda: lambda1_empty_block_attack(spec.b, mu1, p.kappa, alpha))
    put("lambda2", lambda: lambda2_for(p, spec.b)[0])
    put("alpha_prime", lambda: lambda2_for(p, spec.b)[1])
    put("beta_max", lambda: fault_tolerance_beta_max(p.kappa))
    if errors:
        row["error"] = ";".join(errors)
    return row


def _rows_serial(spec: SweepSpec, xs: Sequence[float]) -> list[dict[str, object]]:
    return [_row(spec, x) for x in xs]


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[dict[str, object]]:
    """Evaluate every grid point; rows come back in grid order.

    With ``workers > 1`` the points are split across processes.
    """
    if not workers or workers <= 1 or len(spec.grid) < 2:
        return _rows_serial(spec, spec.grid)
    pieces = [list(c) for c in np.array_split(np.asarray(spec.grid), workers) if c.size]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_rows_serial, [spec] * len(pieces), pieces))
    return [row for part in parts for row in part]


def format_value(v: object) -> str:
    """Shortest round-trip text for floats, so re-runs give identical bytes."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows: Iterable[dict[str, object]], fh: TextIO | None = None, columns: Sequence[str] = COLUMNS) -> str | None:
    out = io.StringIO() if fh is None else fh
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    if fh is None:
        return out.getvalue()
    return None


# ------------------------------------------------------------------ presets


def derive_k(alpha: float, mu1: float, mu2: float, target: float = 1e-3, tol: float = DEFAULT_TOL, k_cap: int = 5000) -> int:
    """Smallest ``k`` whose upper bound falls below ``target``.

    Gallops upward and then bisects, relying on the bound being
    nonincreasing in ``k``.
    """
    p = derive(alpha, mu1, mu2)

    def ok(k: int) -> bool:
        return safety_violation(p, k, BoundKind.UPPER, tol).p_value < target

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > k_cap:
            raise ParameterDomainError(f"no k up to {k_cap} reaches {target:g}")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


TABLE2_COLUMNS = (
    "mu2",
    "beta_max",
    "lambda0",
    "k",
    "p_beta_0.1",
    "p_beta_0.25",
    "p_beta_0.4",
    "latency_s",
    "target_beta",
    "k_derived",
)


def table2(tol: float = DEFAULT_TOL, with_derived_k: bool = True) -> list[dict[str, object]]:
    """Fault tolerance, throughput, bounds and latency at the four mining rates.

    The three depths per rate aim at ``p < 1e-3`` for ``beta = 0.1, 0.25,
    0.4`` in turn (the first depth at the slowest rate is the usual six).
    ``k_derived`` is our own search for the smallest depth meeting that
    target, listed next to the given depth.
    """
    rows = []
    for mu2 in TABLE_RATES:
        kappa = mu2 / MU1_BTC
        for k, target_beta in zip(TABLE2_K[mu2], TABLE_BETAS):
            row: dict[str, object] = {
                "mu2": mu2,
                "beta_max": fault_tolerance_beta_max(kappa),
                "lambda0": stability_threshold(4500, MU1_BTC, mu2),
                "k": k,
                "latency_s": expected_confirmation_latency(k, mu2),
                "target_beta": target_beta,
            }
            for beta in TABLE_BETAS:
                p = derive(1.0 - beta, MU1_BTC, mu2)
                row[f"p_beta_{beta:g}"] = safety_violation(p, k, BoundKind.UPPER, tol).p_value
            if with_derived_k:
                row["k_derived"] = derive_k(1.0 - target_beta, MU1_BTC, mu2, 1e-3, tol)
            rows.append(row)
    return rows


TABLE3_COLUMNS = ("mu2", "lambda0", "beta", "lambda1", "lambda2", "alpha_prime")


def table3(b: int = 4500) -> list[dict[str, object]]:
    """Throughput under the empty-block and selfish queue-service attacks."""
    rows = []
    for mu2 in TABLE_RATES:
        kappa = mu2 / MU1_BTC
        for beta in TABLE_BETAS:
            p = derive(1.0 - beta, MU1_BTC, mu2)
            lam2, ap = lambda2_for(p, b)
            rows.append(
                {
                    "mu2": mu2,
                    "lambda0": stability_threshold(b, MU1_BTC, mu2),
                    "beta": beta,
                    "lambda1": lambda1_empty_block_attack(b, MU1_BTC, kappa, 1.0 - beta),
                    "lambda2": lam2,
                    "alpha_prime": ap,
                }
            )
    return rows


def fig_bound_vs_k(alpha: float, k_max: int = 100, mu2: float = 1 / 600) -> SweepSpec:
    """Upper and lower bounds against depth at the given honest share."""
    return SweepSpec(
        axis="k",
        grid=tuple(float(k) for k in range(1, k_max + 1)),
        alpha=alpha,
        mu2=mu2,
        outputs=("p_upper", "p_lower", "latency_s"),
    )


def kappa_grid(alpha: float, n: int = 200, low: float = 1e-4) -> tuple[float, ...]:
    """``n`` log-spaced fork rates from ``low`` up to, not including, the recurrence boundary."""
    boundary = 2.0 - 1.0 / alpha
    if boundary <= low:
        raise ParameterDomainError(f"alpha={alpha:g} leaves no fork rate above {low:g}")
    return tuple(float(v) for v in np.geomspace(low, boundary, n + 1)[:-1])


FIG5_K = (6, 7, 8, 10, 15, 20)


def fig_kappa_sweeps(alpha: float = 0.9, ks: Sequence[int] = FIG5_K, n: int = 200) -> list[tuple[int, SweepSpec]]:
    """Bound, latency and throughput against fork rate, one sweep per depth."""
    grid = kappa_grid(alpha, n)
    return [
        (k, SweepSpec(axis="kappa", grid=grid, alpha=alpha, k=k, outputs=("p_upper", "latency_s", "lambda0")))
        for k in ks
    ]
