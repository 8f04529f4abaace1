"""Command-line interface: ``rgarch {simulate,fit,mcem-fit,predict,acf,replicate}``.

Exit codes: 0 success, 2 invalid input, 3 no convergence (outputs are still
written, flagged ``converged: false``).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .harness import ReplicationSpec, run_replications, summarize
from .inference import fit_mle, order_scan, scale_residuals, select_order
from .io import (
    fit_from_dict,
    fit_to_dict,
    read_json,
    read_rankings_csv,
    write_json,
    write_rankings_csv,
    write_table,
)
from .mcem import MCEMConfig, mcem_fit
from .perms import DistanceKind, as_distance
from .predict import RankEvent, exact_event_prob, forecast_mean, is_event_prob
from .process import Coefficients, ModelOrder, check_stationarity, empirical_acf_pacf, simulate

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3


class CLIError(Exception):
    """Invalid input reported with exit code 2."""


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RGARCH_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CLIError(f"RGARCH_SEED must be an integer, got {env!r}") from None
    return int(np.random.SeedSequence().entropy % (2**63))


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _metadata(command: str, seed, config: dict) -> dict:
    return {"version": __version__, "command": command, "seed": seed, "config": config}


def _coef_from_args(args) -> Coefficients:
    p, q = args.order
    phi = tuple(args.phi or ())
    alpha = tuple(args.alpha or ())
    if len(phi) != p or len(alpha) != q:
        raise CLIError(f"--order {p} {q} needs {p} --phi and {q} --alpha values")
    return Coefficients(args.phi0, phi, alpha)


def _acf_columns(d, max_lag: int) -> dict:
    acf, pacf = empirical_acf_pacf(d, max_lag)
    band = 1.96 / np.sqrt(len(d))
    return {"lag": np.arange(max_lag + 1), "acf": acf, "pacf": pacf,
            "band": np.full(max_lag + 1, band)}


def _max_lag(args, n: int) -> int:
    return max(1, min(args.max_lag, n - 2))


# -- commands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    seed = _seed(args)
    coef = _coef_from_args(args)
    kind = as_distance(args.distance)
    order = ModelOrder(*args.order)
    series, path = simulate(args.k, args.n, order, coef, kind, np.random.default_rng(seed),
                            allow_nonstationary=args.allow_nonstationary)
    out = _out(args)
    write_rankings_csv(series, out / "rankings.csv")
    d = series.lag_distances(kind)[order.m:]
    write_table(out / "mu_path.csv", {
        "t": np.arange(order.m + 2, series.n + 1), "distance": d, "mu": path.mu, "theta": path.theta,
    })
    write_json(_metadata("simulate", seed, {
        "k": args.k, "n": args.n, "order": list(args.order), "distance": kind.value,
        "coefficients": coef.to_array().tolist(), "allow_nonstationary": args.allow_nonstationary,
    }), out / "metadata.json")
    return EXIT_OK


def _write_fit_outputs(out: Path, fit, series, args, command: str, seed, extra_config=None) -> None:
    kind = fit.distance
    doc = fit_to_dict(fit)
    config = {"input": str(args.input), "order": list(args.order), "distance": kind.value}
    config.update(extra_config or {})
    doc["metadata"] = _metadata(command, seed, config)
    write_json(doc, out / "fit.json")
    t = np.arange(fit.order.m + 2, fit.order.m + 2 + len(fit.residuals))
    cols = {"t": t, "residual": fit.residuals}
    if kind is DistanceKind.HAMMING:
        cols["residual_kendall_scale"] = scale_residuals(fit.residuals, fit.k, kind)
    write_table(out / "residuals.csv", cols)
    if series.is_complete:
        d = series.lag_distances(kind)
        write_table(out / "acf.csv", _acf_columns(d, _max_lag(args, len(d))))
        r = fit.residuals
        if len(r) > 3 and np.ptp(r) > 0:
            write_table(out / "residual_acf.csv", _acf_columns(r, _max_lag(args, len(r))))


def cmd_fit(args) -> int:
    series = read_rankings_csv(args.input)
    if not series.is_complete:
        raise CLIError(
            f"{args.input} has missing entries in {len(series.missing_rows)} rows; "
            "use 'rgarch mcem-fit' for incomplete rankings"
        )
    kind = as_distance(args.distance)
    out = _out(args)
    seed = args.seed if args.seed is not None else os.environ.get("RGARCH_SEED")
    if args.scan:
        rows = order_scan(series, kind, *args.scan)
        write_table(out / "scan.csv", {
            "p": [r.p for r in rows], "q": [r.q for r in rows],
            "aic": [r.aic for r in rows], "bic": [r.bic for r in rows],
            "loglik": [r.fit.loglik if r.fit else float("nan") for r in rows],
            "converged": [bool(r.fit and r.fit.converged) for r in rows],
            "error": [r.error or "" for r in rows],
        })
        best_aic, best_bic = select_order(rows, "aic"), select_order(rows, "bic")
        write_json({"aic": [best_aic.p, best_aic.q], "bic": [best_bic.p, best_bic.q]},
                   out / "selected_order.json")
    fit = fit_mle(series, ModelOrder(*args.order), kind)
    _write_fit_outputs(out, fit, series, args, "fit", seed)
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_mcem_fit(args) -> int:
    series = read_rankings_csv(args.input)
    if np.isnan(series.data).all():
        raise CLIError(f"{args.input} has no observed entries")
    seed = _seed(args)
    kind = as_distance(args.distance)
    cfg = MCEMConfig(M0=args.M0, epsilon=args.epsilon, L=args.L, max_iters=args.max_iters,
                     seed=seed, completion=args.completion, sweeps=args.sweeps)
    fit, trace = mcem_fit(series, ModelOrder(*args.order), kind, cfg)
    out = _out(args)
    _write_fit_outputs(out, fit, series, args, "mcem-fit", seed, {
        "M0": cfg.M0, "epsilon": cfg.epsilon, "L": cfg.L, "max_iters": cfg.max_iters,
        "completion": cfg.completion, "sweeps": cfg.sweeps,
    })
    names = fit.coef_hat.names()
    rows = [rec.as_row(names) for rec in trace.records]
    write_table(out / "trace.csv", {key: [row[key] for row in rows] for key in rows[0]})
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def _parse_event(spec: str, k: int, mode) -> RankEvent:
    if spec == "top":
        return RankEvent.top_retained(mode)
    pairs = []
    for part in spec.split(","):
        try:
            item, rank = part.split(":")
            pairs.append((int(item), int(rank)))
        except ValueError:
            raise CLIError(f"event must be 'top' or item:rank pairs, got {part!r}") from None
    event = RankEvent(pairs)
    event.check(k)
    return event


def cmd_predict(args) -> int:
    fit = fit_from_dict(read_json(args.fit))
    series = read_rankings_csv(args.input)
    seed = _seed(args)
    fc = forecast_mean(fit, series)
    mode = series.data[-1]
    if np.isnan(mode).any():
        raise CLIError("the last ranking must be complete to serve as the mode")
    mode = mode.astype(int)
    event = _parse_event(args.event, series.k, mode)
    res = is_event_prob(event, mode, fc.theta_next, fit.distance, args.L, args.density,
                        np.random.default_rng(seed))
    doc = {
        "mu_next": fc.mu_next, "theta_next": fc.theta_next,
        "event": sorted([list(c) for c in event.fixed_positions]),
        "estimate": res.estimate, "std_error": res.std_error, "L_samples": res.L_samples,
        "density_kind": res.density_kind, "theta_proposal": res.theta_proposal,
    }
    if args.exact:
        doc["exact"] = exact_event_prob(event, mode, fc.theta_next, fit.distance)
    doc["metadata"] = _metadata("predict", seed, {
        "fit": str(args.fit), "input": str(args.input), "event": args.event, "L": args.L,
        "density": args.density, "exact": args.exact,
    })
    write_json(doc, _out(args) / "prediction.json")
    return EXIT_OK


def cmd_acf(args) -> int:
    series = read_rankings_csv(args.input)
    if not series.is_complete:
        raise CLIError("lag distances need complete rankings")
    d = series.lag_distances(args.distance)
    write_table(_out(args) / "acf.csv", _acf_columns(d, _max_lag(args, len(d))))
    return EXIT_OK


def cmd_replicate(args) -> int:
    seed = _seed(args)
    p, q = args.order
    spec = ReplicationSpec(
        k=args.k, n=args.n, phi0=args.phi0, phi=tuple(args.phi or ()), alpha=tuple(args.alpha or ()),
        distance=as_distance(args.distance).value, missing=args.missing, M0=args.M0,
        epsilon=args.epsilon, L=args.L, completion=args.completion,
    )
    if len(spec.phi) != p or len(spec.alpha) != q:
        raise CLIError(f"--order {p} {q} needs {p} --phi and {q} --alpha values")
    if not check_stationarity(spec.coef).stationary:
        raise CLIError("replication coefficients must be stationary")
    outcomes = run_replications(spec, args.reps, seed, args.workers)
    names = spec.coef.names()
    est = np.array([o.estimates for o in outcomes])
    se = np.array([o.std_errors for o in outcomes])
    cols = {"rep": [o.rep for o in outcomes], "seed": [str(o.seed) for o in outcomes]}
    cols.update({f"{nm}": est[:, j] for j, nm in enumerate(names)})
    cols.update({f"se_{nm}": se[:, j] for j, nm in enumerate(names)})
    cols["converged"] = [o.converged for o in outcomes]
    out = _out(args)
    write_table(out / "estimates.csv", cols)
    summary = summarize(outcomes, spec.coef.to_array())
    summary["names"] = names
    summary["metadata"] = _metadata("replicate", seed, {**spec.to_dict(), "reps": args.reps})
    write_json(summary, out / "summary.json")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def _common(sp, seed=True):
    sp.add_argument("--distance", choices=["kendall", "hamming"], default="kendall")
    sp.add_argument("--out", default=".", help="output directory")
    if seed:
        sp.add_argument("--seed", type=int, default=None, help="master seed (default: $RGARCH_SEED)")


def _order_arg(sp, default=(1, 0)):
    sp.add_argument("--order", nargs=2, type=int, metavar=("P", "Q"), default=list(default))


def _coef_args(sp):
    sp.add_argument("--phi0", type=float, required=True)
    sp.add_argument("--phi", type=float, nargs="*", default=[])
    sp.add_argument("--alpha", type=float, nargs="*", default=[])


def _mcem_args(sp):
    sp.add_argument("--M0", type=int, default=200)
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.add_argument("--L", type=float, default=4.0)
    sp.add_argument("--completion", choices=["posterior", "uniform"], default="posterior")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgarch", description="Ranking-GARCH models for ranking time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="simulate a ranking series")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    _order_arg(sp)
    _coef_args(sp)
    _common(sp)
    sp.add_argument("--allow-nonstationary", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="maximum likelihood fit of a complete series")
    sp.add_argument("input")
    _order_arg(sp)
    _common(sp)
    sp.add_argument("--scan", nargs=2, type=int, metavar=("PMAX", "QMAX"))
    sp.add_argument("--max-lag", type=int, default=20)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("mcem-fit", help="Monte Carlo EM fit of a series with missing entries")
    sp.add_argument("input")
    _order_arg(sp)
    _common(sp)
    _mcem_args(sp)
    sp.add_argument("--max-iters", type=int, default=50)
    sp.add_argument("--sweeps", type=int, default=20)
    sp.add_argument("--max-lag", type=int, default=20)
    sp.set_defaults(func=cmd_mcem_fit)

    sp = sub.add_parser("predict", help="event probability for the next ranking")
    sp.add_argument("input", help="series CSV the model was fitted on")
    sp.add_argument("--fit", required=True, help="fit.json from 'fit' or 'mcem-fit'")
    sp.add_argument("--event", default="top", help="'top' or item:rank pairs, e.g. 3:1,7:2")
    sp.add_argument("--L", type=int, default=500)
    sp.add_argument("--density", choices=["designed", "naive"], default="designed")
    sp.add_argument("--exact", action="store_true", help="also enumerate the exact value (k <= 8)")
    _common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("acf", help="ACF/PACF of the lag-one distances")
    sp.add_argument("input")
    sp.add_argument("--max-lag", type=int, default=20)
    _common(sp, seed=False)
    sp.set_defaults(func=cmd_acf)

    sp = sub.add_parser("replicate", help="Monte Carlo simulate-and-fit harness")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--missing", type=float, default=0.0, help="fraction of entries to delete")
    _order_arg(sp)
    _coef_args(sp)
    _mcem_args(sp)
    _common(sp)
    sp.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, ValueError, OSError) as exc:
        print(f"rgarch {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
