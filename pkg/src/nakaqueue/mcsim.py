"""Seeded Monte Carlo simulators for the attack and queue models.

Three processes are simulated:

* the rigged private attack (lead before the target transaction, the ``k``
  jumpers of the confirmation window and the post-confirmation race),
* the selfish queue-service attack, which yields the honest share of the
  longest chain,
* the two-phase batch-service queue.

Random streams are keyed by ``(seed, chunk)`` through
:class:`numpy.random.SeedSequence`. A chunk is a fixed block of
``CHUNK`` trials that always runs on one stream, so results do not depend on
how many worker threads execute the chunks. The kernels are compiled with
numba and release the GIL.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numba
import numpy as np
from scipy import stats

from . import dist
from .dist import Pmf
from .errors import ParameterDomainError
from .params import ChainParams
from .queue import QueueSpec
from .seclat import BoundKind, recovery_ratio

__all__ = [
    "SimConfig",
    "SimReport",
    "QueueStats",
    "simulate_rigged_attack",
    "simulate_post_race_maximum",
    "simulate_selfish_queue_attack",
    "simulate_two_phase_queue",
    "chunk_seed",
    "CHUNK",
]

CHUNK = 65_536
BURN_IN = 100_000
THIN = 32
HIST_SIZE = 4096
Z99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True)
class SimConfig:
    """Scenario description shared by all simulators.

    ``horizon`` is read per simulator: final chain blocks per run for the
    selfish attack and arrival-plus-service events per run for the queue.
    The rigged attack ignores it. ``k_max`` extends the rigged attack's
    common-random-number violation curve beyond ``k``.
    """

    seed: int
    trials: int
    params: ChainParams | None = None
    k: int = 6
    queue: QueueSpec | None = None
    horizon: float = 1e6
    post_race_cap: float = 1e-9
    k_max: int | None = None
    workers: int | None = None

    def __post_init__(self) -> None:
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ParameterDomainError(f"seed must be a 64-bit nonnegative integer, got {self.seed}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ParameterDomainError(f"trials must be a positive integer, got {self.trials}")
        if not self.horizon > 0:
            raise ParameterDomainError(f"horizon must be positive, got {self.horizon}")
        if not 0.0 < self.post_race_cap < 1.0:
            raise ParameterDomainError(f"post_race_cap must lie in (0, 1), got {self.post_race_cap}")
        if int(self.k) != self.k or self.k < 0:
            raise ParameterDomainError(f"k must be a nonnegative integer, got {self.k}")
        if self.k_max is not None and self.k_max < self.k:
            raise ParameterDomainError("k_max must be at least k")


@dataclass(frozen=True)
class QueueStats:
    """Backlog summary of a queue run."""

    mean_backlog: float
    ci_half_width: float
    max_backlog: int
    slope: float
    slope_t: float
    verdict: str
    batch_means: list[float] = field(default_factory=list)
    inclusion: list[float] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class SimReport:
    """Empirical outputs of a simulation run.

    The confidence half-width of ``violation_rate`` is the normal
    approximation ``2.5758 sqrt(p (1 - p) / n)``; ``chain_quality_se`` is
    the standard error across independent runs.
    """

    trials: int
    violation_rate: float = math.nan
    violation_half_width: float = math.nan
    violation_se: float = math.nan
    violation_by_k: dict[int, float] = field(default_factory=dict)
    empirical_pmfs: dict[str, Pmf] = field(default_factory=dict)
    chain_quality: float = math.nan
    chain_quality_se: float = math.nan
    queue_stats: QueueStats | None = None
    rng_draws: int = 0
    abandoned: int = 0
    step_capped: int = 0
    diverged: bool = False
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        doc: dict[str, Any] = {
            "trials": self.trials,
            "violation_rate": self.violation_rate,
            "violation_half_width": self.violation_half_width,
            "violation_se": self.violation_se,
            "violation_by_k": {str(k): v for k, v in self.violation_by_k.items()},
            "chain_quality": self.chain_quality,
            "chain_quality_se": self.chain_quality_se,
            "queue_stats": None if self.queue_stats is None else asdict(self.queue_stats),
            "rng_draws": self.rng_draws,
            "abandoned": self.abandoned,
            "step_capped": self.step_capped,
            "diverged": self.diverged,
            "notes": list(self.notes),
            "empirical_pmfs": {
                name: {"offset": pmf.offset, "probs": pmf.probs.tolist(), "tail_mass": pmf.tail_mass}
                for name, pmf in self.empirical_pmfs.items()
            },
        }
        return json.dumps(_finite_json(doc), indent=2, sort_keys=True)


def _finite_json(x: Any) -> Any:
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite_json(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_finite_json(v) for v in x]
    return x


def chunk_seed(seed: int, chunk: int) -> int:
    """32-bit seed for the numba generator of one chunk."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))
    return int(ss.generate_state(1, np.uint32)[0])


def _run_chunks(fn: Callable[[int, int], Any], total: int, size: int, workers: int | None) -> list[Any]:
    # fn(chunk_index, n) for each chunk; results come back in chunk order
    sizes = [min(size, total - start) for start in range(0, total, size)]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(sizes) == 1:
        return [fn(i, n) for i, n in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda a: fn(*a), enumerate(sizes)))


def _empirical(counts: np.ndarray, overflow: int) -> Pmf | None:
    # None when every sample overflowed the histogram
    total = counts.sum() + overflow
    if counts.sum() == 0:
        return None
    return dist.from_probs(counts / total, tol=overflow / total)


def _pmfs(**hists: np.ndarray) -> tuple[dict[str, Pmf], list[str]]:
    out, notes = {}, []
    for name, h in hists.items():
        pmf = _empirical(h[:-1], int(h[-1]))
        if pmf is None:
            notes.append(f"every {name} sample exceeded {h.size - 1}; no empirical law kept")
        else:
            out[name] = pmf
    return out, notes


def _abandon_depth(p: ChainParams, cap: float) -> float:
    # below this deficit the walk recovers with probability under cap
    z = recovery_ratio(p, BoundKind.UPPER)
    if math.isinf(z):
        return 0.0
    if z <= 1.0:
        return math.inf
    return math.log(1.0 / cap) / math.log(z)


# ---------------------------------------------------------------- rigged attack


@numba.njit(nogil=True, cache=True)
def _lead_step(lead, beta, sigma):
    # one event of the lead chain; returns (lead, draws)
    if np.random.random() < beta:
        return lead + 1, 1
    g = np.random.geometric(sigma) - 1
    if lead >= 1:
        return lead + g - 1, 2
    return g, 2


@numba.njit(nogil=True, cache=True)
def _rigged_chunk(seed, n, alpha, sigma, k, k_max, burn, thin, h_abandon, step_cap, hist_size):
    np.random.seed(seed)
    beta = 1.0 - alpha
    draws = 0
    lead = 0
    first = 0.0
    second = 0.0
    half = burn // 2
    for t in range(burn):
        lead, d = _lead_step(lead, beta, sigma)
        draws += d
        if t < half:
            first += lead
        else:
            second += lead

    ends = np.zeros(k_max + 2, np.int64)
    lead_hist = np.zeros(hist_size + 1, np.int64)
    c_hist = np.zeros(hist_size + 1, np.int64)
    s_hist = np.zeros(hist_size + 1, np.int64)
    abandoned = 0
    capped = 0
    for _ in range(n):
        for _ in range(thin):
            lead, d = _lead_step(lead, beta, sigma)
            draws += d
        lead_hist[min(lead, hist_size)] += 1
        # W_n = lead + S_n - n; depth k is violated iff W_n >= -1 for some n > k
        w = lead
        s = 0
        last = -1
        step = 0
        while True:
            c = (np.random.geometric(alpha) - 1) + (np.random.geometric(sigma) - 1)
            draws += 2
            step += 1
            w += c - 1
            if step <= k:
                s += c
                c_hist[min(c, hist_size)] += 1
                if step == k:
                    s_hist[min(s, hist_size)] += 1
            if w >= -1:
                last = step
            if step > k_max and w < -1 - h_abandon:
                abandoned += 1
                break
            if step >= step_cap:
                capped += 1
                break
        # violations at depths 1 .. last - 1
        if last >= 2:
            ends[min(last - 1, k_max)] += 1
    return ends, lead_hist, c_hist, s_hist, abandoned, capped, draws, first / max(half, 1), second / max(burn - half, 1)


def simulate_rigged_attack(cfg: SimConfig, step_cap: int = 1_000_000) -> SimReport:
    """Monte Carlo of the rigged private attack at depth ``cfg.k``.

    The lead chain runs continuously inside each chunk: ``BURN_IN`` events
    first, then ``THIN`` events between consecutive trials. Each trial draws
    jumper counts ``C`` (adversarial blocks before the next jumper plus
    rigged blocks during its delay) and follows ``W_n = lead + S_n - n``.
    Depth ``k`` is violated when ``W_n >= -1`` for some ``n > k``; the same
    path serves every depth up to ``k_max``. A path is abandoned once
    ``n > k_max`` and its deficit makes a return less likely than
    ``post_race_cap``; abandonment counts as no violation, so the estimate
    is biased low by at most that cap.
    """
    p = _need_params(cfg)
    if cfg.k < 1:
        raise ParameterDomainError("the rigged attack needs k >= 1")
    k_max = cfg.k if cfg.k_max is None else int(cfg.k_max)
    h = _abandon_depth(p, cfg.post_race_cap)
    h_arg = 1e300 if math.isinf(h) else h

    def one(chunk: int, n: int):
        return _rigged_chunk(
            chunk_seed(cfg.seed, chunk), n, p.alpha, p.sigma, cfg.k, k_max, BURN_IN, THIN, h_arg, step_cap, HIST_SIZE
        )

    parts = _run_chunks(one, cfg.trials, CHUNK, cfg.workers)
    ends = sum(r[0] for r in parts)
    lead_hist = sum(r[1] for r in parts)
    c_hist = sum(r[2] for r in parts)
    s_hist = sum(r[3] for r in parts)
    abandoned = int(sum(r[4] for r in parts))
    capped = int(sum(r[5] for r in parts))
    draws = int(sum(r[6] for r in parts))
    diverged = any(r[8] > 1.5 * r[7] and r[8] > 10.0 for r in parts)

    # ends[j] counts paths violating depths 1..j; a reverse cumsum gives counts per depth
    per_depth = np.cumsum(ends[::-1])[::-1]
    n = cfg.trials
    by_k = {kk: float(per_depth[kk]) / n for kk in range(1, k_max + 1)}
    rate = by_k[cfg.k]
    se = math.sqrt(rate * (1.0 - rate) / n)
    pmfs, notes = _pmfs(lead=lead_hist, inter_jumper=c_hist, s_k=s_hist)
    if capped:
        notes.append(f"{capped} trials hit the step cap of {step_cap}")
    if diverged:
        notes.append("lead kept growing during burn-in; the lead chain looks non-recurrent")
    return SimReport(
        trials=n,
        violation_rate=rate,
        violation_half_width=Z99 * se,
        violation_se=se,
        violation_by_k=by_k,
        empirical_pmfs=pmfs,
        rng_draws=draws,
        abandoned=abandoned,
        step_capped=capped,
        diverged=diverged,
        notes=notes,
    )


@numba.njit(nogil=True, cache=True)
def _post_race_chunk(seed, n, alpha, sigma, h_abandon, step_cap, hist_size):
    np.random.seed(seed)
    hist = np.zeros(hist_size + 1, np.int64)
    draws = 0
    capped = 0
    for _ in range(n):
        v = 1  # running S'_i - i + 1 before the first step
        best = -1
        step = 0
        while True:
            c = (np.random.geometric(alpha) - 1) + (np.random.geometric(sigma) - 1)
            draws += 2
            step += 1
            v += c - 1
            if v > best:
                best = v
            if v < best - h_abandon:
                break
            if step >= step_cap:
                capped += 1
                break
        hist[min(best, hist_size)] += 1
    return hist, draws, capped


def simulate_post_race_maximum(cfg: SimConfig, step_cap: int = 1_000_000) -> SimReport:
    """Sample ``M = max_{i >= 1} (S'_i - i + 1)`` directly.

    A path stops once it sits so far below its running maximum that a new
    maximum is less likely than ``post_race_cap``. The empirical law is
    returned under ``empirical_pmfs["post_max"]``.
    """
    p = _need_params(cfg)
    h = _abandon_depth(p, cfg.post_race_cap)
    h_arg = 1e300 if math.isinf(h) else h

    def one(chunk: int, n: int):
        return _post_race_chunk(chunk_seed(cfg.seed, chunk), n, p.alpha, p.sigma, h_arg, step_cap, HIST_SIZE)

    parts = _run_chunks(one, cfg.trials, CHUNK, cfg.workers)
    hist = sum(r[0] for r in parts)
    pmfs, notes = _pmfs(post_max=hist)
    return SimReport(
        trials=cfg.trials,
        empirical_pmfs=pmfs,
        notes=notes,
        rng_draws=int(sum(r[1] for r in parts)),
        step_capped=int(sum(r[2] for r in parts)),
    )


# ------------------------------------------------------------ selfish attack


@numba.njit(nogil=True, cache=True)
def _selfish_run(seed, alpha, mu1, mu2, horizon, step_cap):
    np.random.seed(seed)
    beta = 1.0 - alpha
    adv_rate = beta * mu2
    state = -1
    honest = 0
    adv = 0
    draws = 0
    steps = 0
    while honest + adv < horizon and steps < step_cap:
        steps += 1
        draws += 1
        if np.random.random() < beta:
            if state == -1:
                adv += 1  # published at once, nullifies the pending honest block
                state = 0
            else:
                state += 1
            continue
        # honest block; count adversarial blocks mined during its delay
        delay = np.random.exponential(1.0 / mu1)
        i = np.random.poisson(adv_rate * delay)
        draws += 2
        if state == -1:
            honest += 1  # the previous honest block is now buried
            if i >= 1:
                adv += 1
            state = i - 1
        elif state == 0:
            if i >= 1:
                adv += 1
                state = i - 1
            else:
                state = -1
        else:
            adv += 1  # a private block on the same height wins the tie
            state = state + i - 1
    return honest, adv, draws, steps


def simulate_selfish_queue_attack(cfg: SimConfig, step_cap: int = 10**10) -> SimReport:
    """Honest share of the final chain under the selfish queue-service attack.

    Each run starts with no private chain and stops once ``horizon`` blocks
    are final. Honest blocks are delayed by their full ``Exp(mu1)`` delay,
    during which only adversarial mining counts. The reported standard error
    comes from the spread of the per-run shares over ``trials`` runs.
    """
    p = _need_params(cfg)
    horizon = int(cfg.horizon)

    def one(run: int, _n: int):
        return _selfish_run(chunk_seed(cfg.seed, run), p.alpha, p.mu1, p.mu2, horizon, step_cap)

    parts = _run_chunks(one, cfg.trials, 1, cfg.workers)
    shares = np.array([h / max(h + a, 1) for h, a, _, _ in parts], dtype=np.float64)
    mean = float(shares.mean())
    se = float(shares.std(ddof=1) / math.sqrt(shares.size)) if shares.size > 1 else math.nan
    notes = []
    if any(s >= step_cap for *_, s in parts):
        notes.append("a run hit the step cap before reaching the horizon")
    return SimReport(
        trials=cfg.trials,
        chain_quality=mean,
        chain_quality_se=se,
        rng_draws=int(sum(r[2] for r in parts)),
        notes=notes,
    )


# --------------------------------------------------------------- queue model


@numba.njit(nogil=True, cache=True)
def _queue_run(seed, b, lam, mu1, mu2, horizon, n_batches, track, m_cap):
    np.random.seed(seed)
    j = 0
    phase = 0
    t = 0.0
    events = 0
    draws = 0
    max_j = 0
    per_batch = horizon / n_batches
    area = np.zeros(n_batches)
    span = np.zeros(n_batches)
    incl = np.zeros(m_cap + 1, np.int64)
    batch = 0
    while batch < n_batches:
        rate = mu2 if phase == 0 else mu1
        dt = np.random.exponential(1.0 / rate)
        arrivals = np.random.poisson(lam * dt) if lam > 0 else 0
        draws += 2
        if track:
            # the a-th arrival of the interval has j + a transactions ahead
            for a in range(arrivals):
                m = (j + a) // b
                incl[min(m, m_cap)] += 1
        # arrival times are uniform given their count, so the backlog integral
        # over the interval is j dt + arrivals dt / 2 in expectation
        area[batch] += j * dt + arrivals * dt * 0.5
        span[batch] += dt
        j += arrivals
        if j > max_j:
            max_j = j
        events += arrivals + 1
        if phase == 0:
            if j > 0:
                take = min(b, j)
                j -= take
                phase = take
        else:
            phase = 0
        t += dt
        while batch < n_batches and events >= (batch + 1) * per_batch:
            batch += 1
    return area, span, max_j, draws, incl


def simulate_two_phase_queue(cfg: SimConfig, n_batches: int = 64, track_inclusion: bool = False) -> SimReport:
    """Long-run simulation of the two-phase batch-service queue.

    Mining takes ``Exp(mu2)`` and moves ``min(b, |Q|)`` transactions into the
    block; the block then propagates for ``Exp(mu1)`` with no mining. An
    attempt on an empty mempool changes nothing. Arrivals are drawn per
    service interval as a Poisson count and the backlog integral uses the
    conditional expectation of the arrival times.

    Each of the ``trials`` runs is cut into ``n_batches`` batches of equal
    event count and the first eighth is dropped as warm-up. The mean backlog
    carries a 99% batch-means interval (Student t). The verdict is
    ``"unstable"`` when the least-squares slope of the batch means against
    time, over the last half of each run, is positive at one-sided 99% and
    the growth it implies across that window exceeds a tenth of the mean
    level there. The second condition keeps a slowly fading start-up
    transient from passing for divergence when the sample is very large.
    """
    q = cfg.queue
    if q is None:
        raise ParameterDomainError("simulate_two_phase_queue needs cfg.queue")
    m_cap = 64

    def one(run: int, _n: int):
        return _queue_run(
            chunk_seed(cfg.seed, run), q.b, q.lam, q.mu1, q.mu2, float(cfg.horizon), n_batches, track_inclusion, m_cap
        )

    parts = _run_chunks(one, cfg.trials, 1, cfg.workers)
    warm = n_batches // 8
    means, xs, ys, groups = [], [], [], []
    incl = np.zeros(m_cap + 1, np.int64)
    for r, (area, span, _, _, inc) in enumerate(parts):
        bm = area / np.where(span > 0, span, 1.0)
        means.extend(bm[warm:])
        mid = np.cumsum(span) - span / 2
        tail = slice(n_batches // 2, n_batches)
        xs.append(mid[tail])
        ys.append(bm[tail])
        groups.append(np.full(n_batches - n_batches // 2, r))
        incl += inc
    means = np.asarray(means)
    mean = float(means.mean())
    if means.size > 1 and means.std(ddof=1) > 0:
        hw = float(stats.t.ppf(0.995, means.size - 1) * means.std(ddof=1) / math.sqrt(means.size))
    else:
        hw = 0.0

    # pooled within-run regression of batch mean on time
    x = np.concatenate([v - v.mean() for v in xs])
    y = np.concatenate([v - v.mean() for v in ys])
    sxx = float(np.dot(x, x))
    slope = float(np.dot(x, y) / sxx) if sxx > 0 else 0.0
    dof = x.size - len(xs) - 1
    resid = y - slope * x
    if dof > 0 and sxx > 0 and np.dot(resid, resid) > 0:
        se = math.sqrt(float(np.dot(resid, resid)) / dof / sxx)
        t_stat = slope / se
        crit = float(stats.t.ppf(0.99, dof))
    else:
        t_stat = math.inf if slope > 0 else 0.0
        crit = 0.0
    window = float(np.mean([v[-1] - v[0] for v in xs])) if xs else 0.0
    level = float(np.mean(np.concatenate(ys))) if ys else 0.0
    material = slope * window > 0.1 * max(level, 1.0)
    verdict = "unstable" if t_stat > crit and slope > 0 and material else "stable"
    inclusion = (incl / incl.sum()).tolist() if incl.sum() > 0 else []
    qs = QueueStats(
        mean_backlog=mean,
        ci_half_width=hw,
        max_backlog=int(max(r[2] for r in parts)),
        slope=slope,
        slope_t=float(t_stat),
        verdict=verdict,
        batch_means=[float(v) for v in means],
        inclusion=inclusion,
    )
    return SimReport(trials=cfg.trials, queue_stats=qs, rng_draws=int(sum(r[3] for r in parts)))


def _need_params(cfg: SimConfig) -> ChainParams:
    if cfg.params is None:
        raise ParameterDomainError("this simulation needs cfg.params")
    return cfg.params
