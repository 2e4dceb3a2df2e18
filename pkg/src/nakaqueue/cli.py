"""Command-line interface.

Every numeric result goes to standard output as ``key=value`` lines or CSV,
preceded by ``#`` lines that echo the resolved parameters. Diagnostics go to
standard error. Exit status: 0 on success, 1 for usage errors, 2 for
parameter-domain errors, 3 when the model has no steady state (or the
numerics cannot reach one within their caps).
"""

from __future__ import annotations

import argparse
import contextlib
import math
import sys
from typing import Any, Iterator, Sequence, TextIO

import numpy as np

from . import __version__
from .errors import (
    NakaqueueError,
    NotPositiveRecurrent,
    ParameterDomainError,
    PmfOverflowError,
    SelfishDominates,
    ThresholdUnreachable,
    TruncationFailure,
    Unstable,
)
from .mcsim import (
    SimConfig,
    simulate_post_race_maximum,
    simulate_rigged_attack,
    simulate_selfish_queue_attack,
    simulate_two_phase_queue,
)
from .mempool import general_safety_report
from .params import NetworkModel, derive, expected_confirmation_latency, load_config
from .queue import (
    QueueSpec,
    lambda0_design,
    lambda1_empty_block_attack,
    lambda2_for,
    queue_steady_state,
    stability_threshold,
)
from .seclat import (
    BoundKind,
    fault_tolerance_beta_max,
    max_safe_kappa,
    safety_violation,
    tolerates_adversary,
    ultimate_beta_max,
)
from .sweeps import (
    AXES,
    MU1_BTC,
    OUTPUTS,
    TABLE2_COLUMNS,
    TABLE3_COLUMNS,
    SweepSpec,
    fig_bound_vs_k,
    fig_kappa_sweeps,
    run_sweep,
    table2,
    table3,
    write_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_UNSTABLE = 0, 1, 2, 3
PROB_FLOOR = 1e-13

DEFAULTS: dict[str, Any] = {
    "alpha": 0.9,
    "mu1": MU1_BTC,
    "mu2": 1 / 600,
    "k": 6,
    "b": 4500,
    "tol": 1e-14,
    "seed": 0,
    "horizon": 1e6,
}
CONFIG_EXTRA = ("beta", "kappa", "k", "b", "lambda", "tol", "seed", "trials", "horizon", "kind", "p_threshold")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt_prob(p: float) -> str:
    """Six significant digits, or ``<=1e-13`` below the truncation floor."""
    if p < PROB_FLOOR:
        return "<=1e-13"
    return f"{p:.6g}"


def fmt_num(x: float) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.6g}"


@contextlib.contextmanager
def _output(path: str | None) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float, help="honest fraction of mining power")
    g.add_argument("--beta", type=float, help="adversarial fraction (1 - alpha)")
    p.add_argument("--mu1", type=float, help="delay rate, 1/s (default ln(10)/4)")
    h = p.add_mutually_exclusive_group()
    h.add_argument("--mu2", type=float, help="mining rate, 1/s (default 1/600)")
    h.add_argument("--kappa", type=float, help="fork rate mu2/mu1")
    p.add_argument("--k", type=int, help="confirmation depth (default 6)")
    p.add_argument("--b", type=int, help="block size in transactions (default 4500)")
    p.add_argument("--lambda", dest="lam", type=float, help="transaction arrival rate, 1/s")
    p.add_argument("--c", type=float, help="network speed, transactions/s")
    p.add_argument("--delta0", type=float, help="base propagation delay, s")
    p.add_argument("--tol", type=float, help="truncation tolerance (default 1e-14)")
    p.add_argument("--config", help="JSON parameter file (schema 1); flags override it")
    p.add_argument("--out", help="write the result here instead of standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nakaqueue", description="Security-latency, throughput and simulation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bound", help="safety-violation bound at depth k")
    _add_params(p)
    p.add_argument("--kind", choices=("upper", "lower"), help="bound side (default upper)")
    p.add_argument("--with-mempool", action="store_true", help="also the bound with mempool waiting")

    p = sub.add_parser("tolerance", help="largest tolerated adversarial fraction")
    _add_params(p)

    p = sub.add_parser("kappa-max", help="largest fork rate meeting a bound threshold")
    _add_params(p)
    p.add_argument("--p-threshold", dest="p_threshold", type=float, help="target bound (default 1e-3)")

    p = sub.add_parser("throughput", help="sustainable arrival rates with and without attacks")
    _add_params(p)

    p = sub.add_parser("steady-state", help="stationary queue distribution as CSV")
    _add_params(p)

    p = sub.add_parser("sweep", help="one-axis parameter sweep as CSV")
    _add_params(p)
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--grid", help="comma-separated grid values")
    p.add_argument("--grid-log", help="START:STOP:N log-spaced grid (inclusive)")
    p.add_argument("--outputs", help=f"comma-separated subset of {','.join(OUTPUTS)}")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("sim", help="Monte Carlo simulation")
    _add_params(p)
    p.add_argument("--model", choices=("rigged", "post-race", "selfish", "queue"), default="rigged")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--horizon", type=float, help="blocks per run (selfish) or events per run (queue)")
    p.add_argument("--k-max", dest="k_max", type=int, help="rigged: report violation rates up to this depth")
    p.add_argument("--json", action="store_true", help="print the full report as JSON")

    p = sub.add_parser("repro", help="regenerate a table or figure dataset")
    p.add_argument("target", choices=("table2", "table3", "fig3", "fig4", "fig5"))
    p.add_argument("--out", help="write the result here instead of standard output")
    p.add_argument("--workers", type=int, default=1)
    return parser


def _resolve(args: argparse.Namespace) -> dict[str, Any]:
    cfg: dict[str, Any] = {}
    if getattr(args, "config", None):
        cfg = load_config(args.config, CONFIG_EXTRA)
    flags = {k: v for k, v in vars(args).items() if v is not None}
    if "lam" in flags:
        flags["lambda"] = flags.pop("lam")
    # a flag replaces whichever of its alternatives the config file used
    for a, b in (("alpha", "beta"), ("mu2", "kappa")):
        if a in flags or b in flags:
            cfg.pop(a, None)
            cfg.pop(b, None)
    if "alpha" in cfg and "beta" in cfg:
        raise ParameterDomainError("configuration sets both alpha and beta")
    if "mu2" in cfg and "kappa" in cfg:
        raise ParameterDomainError("configuration sets both mu2 and kappa")
    merged = {**DEFAULTS, **cfg, **flags}
    if "beta" in merged and "alpha" not in {**cfg, **flags}:
        merged["alpha"] = 1.0 - float(merged["beta"])
    if "c" in merged and "mu1" not in {**cfg, **flags}:
        merged["mu1"] = NetworkModel(float(merged["c"]), float(merged.get("delta0", 0.0))).rate(int(merged["b"]))
    if "kappa" in merged and "mu2" not in {**cfg, **flags}:
        merged["mu2"] = float(merged["kappa"]) * float(merged["mu1"])
    merged.pop("beta", None)
    merged.pop("kappa", None)
    return merged


def _header(fh: TextIO, r: dict[str, Any], keys: Sequence[str], extra: dict[str, Any] | None = None) -> None:
    p = derive(r["alpha"], r["mu1"], r["mu2"])
    items = {"alpha": p.alpha, "beta": p.beta, "mu1": p.mu1, "mu2": p.mu2, "kappa": p.kappa}
    items.update({k: r[k] for k in keys if k in r})
    if extra:
        items.update(extra)
    fh.write("# " + " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in items.items()) + "\n")


def _kv(fh: TextIO, **items: Any) -> None:
    for k, v in items.items():
        fh.write(f"{k}={v}\n")


def cmd_bound(args: argparse.Namespace, r: dict[str, Any]) -> int:
    p = derive(r["alpha"], r["mu1"], r["mu2"])
    kind = BoundKind.parse(r.get("kind", "upper"))
    rep = safety_violation(p, r["k"], kind, r["tol"])
    mem = None
    if args.with_mempool:
        if "lambda" not in r:
            raise ParameterDomainError("--with-mempool needs --lambda")
        if kind is not BoundKind.UPPER:
            raise ParameterDomainError("the mempool bound is an upper bound; drop --kind lower")
        q = QueueSpec(r["b"], r["lambda"], r["mu1"], r["mu2"])
        mem = general_safety_report(p, q, r["k"], r["tol"])
    with _output(args.out) as fh:
        _header(fh, r, ("k", "tol") + (("b", "lambda") if mem else ()), {"kind": kind.value})
        _kv(
            fh,
            p_value=fmt_prob(rep.p_value),
            kind=kind.value,
            k=rep.k,
            truncation_error=fmt_num(rep.truncation_error),
            latency_s=fmt_num(expected_confirmation_latency(rep.k, p.mu2)) if rep.k >= 1 else "0",
        )
        if mem is not None:
            _kv(
                fh,
                p_mempool=fmt_prob(mem.p_value),
                mempool_blocks=mem.inclusion.probs.size,
                mempool_terms_nonincreasing=str(mem.monotone).lower(),
            )
    return EXIT_OK


def cmd_tolerance(args: argparse.Namespace, r: dict[str, Any]) -> int:
    p = derive(r["alpha"], r["mu1"], r["mu2"])
    with _output(args.out) as fh:
        _header(fh, r, ())
        _kv(
            fh,
            beta_max=fmt_num(fault_tolerance_beta_max(p.kappa)),
            tolerates_adversary=str(tolerates_adversary(p.kappa)).lower(),
            ultimate_beta_max=fmt_num(ultimate_beta_max(p.kappa)),
        )
    return EXIT_OK


def cmd_kappa_max(args: argparse.Namespace, r: dict[str, Any]) -> int:
    threshold = float(r.get("p_threshold", 1e-3))
    kappa = max_safe_kappa(r["alpha"], r["k"], threshold, r["tol"])
    with _output(args.out) as fh:
        _header(fh, r, ("k", "b", "tol"), {"p_threshold": threshold})
        _kv(
            fh,
            kappa_max=fmt_num(kappa),
            mu2_max=fmt_num(kappa * r["mu1"]),
            lambda0=fmt_num(stability_threshold(r["b"], r["mu1"], kappa * r["mu1"])),
        )
    return EXIT_OK


def cmd_throughput(args: argparse.Namespace, r: dict[str, Any]) -> int:
    p = derive(r["alpha"], r["mu1"], r["mu2"])
    b = r["b"]
    lam2, ap = lambda2_for(p, b)
    out = {
        "lambda0": fmt_num(stability_threshold(b, p.mu1, p.mu2)),
        "lambda1": fmt_num(lambda1_empty_block_attack(b, p.mu1, p.kappa, p.alpha)),
        "lambda2": fmt_num(lam2),
        "alpha_prime": fmt_num(ap),
    }
    if "c" in r:
        net = NetworkModel(float(r["c"]), float(r.get("delta0", 0.0)))
        out["lambda0_design"] = fmt_num(lambda0_design(b, net, p.kappa))
    with _output(args.out) as fh:
        _header(fh, r, ("b",))
        _kv(fh, **out)
        if ap == 0.0:
            print("selfish miner dominates: no honest block survives, lambda2 = 0", file=sys.stderr)
    return EXIT_OK


def cmd_steady_state(args: argparse.Namespace, r: dict[str, Any]) -> int:
    if "lambda" not in r:
        raise ParameterDomainError("steady-state needs --lambda")
    q = QueueSpec(r["b"], r["lambda"], r["mu1"], r["mu2"])
    tol = r["tol"] if r["tol"] != DEFAULTS["tol"] else 1e-12
    ss = queue_steady_state(q, tol)
    with _output(args.out) as fh:
        fh.write(
            f"# b={q.b} lambda={q.lam!r} mu1={q.mu1!r} mu2={q.mu2!r} tol={tol!r} "
            f"J_max={ss.J_max} tail_mass={ss.tail_mass!r} residual={ss.residual!r} "
            f"mean_backlog={ss.mean_backlog()!r}\n"
        )
        ss.to_csv(fh)
    return EXIT_OK


def _grid(args: argparse.Namespace) -> tuple[float, ...]:
    if bool(args.grid) == bool(args.grid_log):
        raise ParameterDomainError("give exactly one of --grid and --grid-log")
    if args.grid:
        try:
            return tuple(float(v) for v in args.grid.split(","))
        except ValueError:
            raise ParameterDomainError(f"bad --grid {args.grid!r}") from None
    try:
        start, stop, n = args.grid_log.split(":")
        return tuple(float(v) for v in np.geomspace(float(start), float(stop), int(n)))
    except ValueError:
        raise ParameterDomainError(f"bad --grid-log {args.grid_log!r}; expected START:STOP:N") from None


def cmd_sweep(args: argparse.Namespace, r: dict[str, Any]) -> int:
    outputs = tuple(args.outputs.split(",")) if args.outputs else OUTPUTS
    spec = SweepSpec(
        axis=args.axis,
        grid=_grid(args),
        alpha=r["alpha"],
        mu1=r["mu1"],
        mu2=r["mu2"],
        k=r["k"],
        b=r["b"],
        outputs=outputs,
        tol=r["tol"],
    )
    rows = run_sweep(spec, args.workers)
    with _output(args.out) as fh:
        _header(fh, r, ("k", "b", "tol"), {"axis": spec.axis})
        write_csv(rows, fh)
    return EXIT_OK


def cmd_sim(args: argparse.Namespace, r: dict[str, Any]) -> int:
    p = derive(r["alpha"], r["mu1"], r["mu2"])
    queue = None
    if args.model == "queue":
        if "lambda" not in r:
            raise ParameterDomainError("--model queue needs --lambda")
        queue = QueueSpec(r["b"], r["lambda"], r["mu1"], r["mu2"])
    # long runs per trial for the queue models, many short ones otherwise
    r.setdefault("trials", 20 if args.model in ("selfish", "queue") else 100_000)
    trials = r["trials"]
    cfg = SimConfig(
        seed=int(r["seed"]),
        trials=int(trials),
        params=p,
        k=int(r["k"]),
        queue=queue,
        horizon=float(r["horizon"]),
        k_max=args.k_max,
    )
    run = {
        "rigged": simulate_rigged_attack,
        "post-race": simulate_post_race_maximum,
        "selfish": simulate_selfish_queue_attack,
        "queue": simulate_two_phase_queue,
    }[args.model]
    rep = run(cfg)
    with _output(args.out) as fh:
        if args.json:
            fh.write(rep.to_json() + "\n")
            return EXIT_OK
        _header(fh, r, ("k", "seed", "trials", "horizon") + (("b", "lambda") if queue else ()), {"model": args.model})
        if args.model == "rigged":
            _kv(
                fh,
                violation_rate=fmt_num(rep.violation_rate),
                half_width_99=fmt_num(rep.violation_half_width),
                std_error=fmt_num(rep.violation_se),
                abandoned=rep.abandoned,
                step_capped=rep.step_capped,
                diverged=str(rep.diverged).lower(),
            )
            for kk, v in rep.violation_by_k.items():
                if kk != cfg.k:
                    fh.write(f"violation_rate_k{kk}={fmt_num(v)}\n")
        elif args.model == "post-race":
            pmf = rep.empirical_pmfs["post_max"]
            _kv(fh, mean=fmt_num(pmf.mean()), p0=fmt_num(pmf[0]), support=len(pmf))
        elif args.model == "selfish":
            _kv(fh, chain_quality=fmt_num(rep.chain_quality), std_error=fmt_num(rep.chain_quality_se))
        else:
            qs = rep.queue_stats
            _kv(
                fh,
                mean_backlog=fmt_num(qs.mean_backlog),
                half_width_99=fmt_num(qs.ci_half_width),
                max_backlog=qs.max_backlog,
                slope=fmt_num(qs.slope),
                slope_t=fmt_num(qs.slope_t),
                verdict=qs.verdict,
            )
        _kv(fh, rng_draws=rep.rng_draws)
        for note in rep.notes:
            print(note, file=sys.stderr)
    return EXIT_OK


def cmd_repro(args: argparse.Namespace) -> int:
    target = args.target
    with _output(args.out) as fh:
        if target == "table2":
            fh.write(f"# table2 mu1={MU1_BTC!r} b=4500 target=0.001\n")
            write_csv(table2(), fh, TABLE2_COLUMNS)
        elif target == "table3":
            fh.write(f"# table3 mu1={MU1_BTC!r} b=4500\n")
            write_csv(table3(), fh, TABLE3_COLUMNS)
        elif target in ("fig3", "fig4"):
            alpha = 0.9 if target == "fig3" else 0.75
            spec = fig_bound_vs_k(alpha)
            fh.write(f"# {target} alpha={alpha!r} mu1={spec.mu1!r} mu2={spec.mu2!r} axis=k\n")
            write_csv(run_sweep(spec, args.workers), fh)
        else:
            for k, spec in fig_kappa_sweeps():
                fh.write(f"# fig5 alpha={spec.alpha!r} mu1={spec.mu1!r} b={spec.b} k={k} axis=kappa\n")
                write_csv(run_sweep(spec, args.workers), fh)
    return EXIT_OK


COMMANDS = {
    "bound": cmd_bound,
    "tolerance": cmd_tolerance,
    "kappa-max": cmd_kappa_max,
    "throughput": cmd_throughput,
    "steady-state": cmd_steady_state,
    "sweep": cmd_sweep,
    "sim": cmd_sim,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "repro":
            return cmd_repro(args)
        r = _resolve(args)
        return COMMANDS[args.command](args, r)
    except (NotPositiveRecurrent, Unstable, TruncationFailure, PmfOverflowError, SelfishDominates) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (ParameterDomainError, ThresholdUnreachable) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NakaqueueError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
