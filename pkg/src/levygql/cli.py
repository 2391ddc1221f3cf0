"""Command-line interface: ``levygql <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional, Sequence

import numpy as np

from .asymptotics import ergodicity_diagnostics, population_limits
from .avar import confidence_intervals, estimate_sigma
from .errors import LevyGQLError
from .estimator import FitOptions, fit
from .harness import ExperimentConfig, cell_rows, run_coverage, run_fieldscan, run_table1, write_outputs
from .levy import parse_driver
from .model import ParamBox, ThetaPoint, available_models, check_model, get_model
from .simulate import Observations, read_times, simulate_observations


def _model(args):
    base = get_model(args.model)
    box = getattr(args, "box", None)
    return get_model(args.model, ParamBox.parse(box, base.dim_alpha)) if box else base


def _theta(model, text: str) -> ThetaPoint:
    th = ThetaPoint.parse(text, model.dim_alpha)
    if th.stacked.size != model.p:
        raise ValueError(f"--theta needs {model.p} values for model {model.name}")
    return th


def _emit_json(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, default=float)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_simulate(args) -> int:
    model = _model(args)
    theta = _theta(model, args.theta)
    times = read_times(args.irregular) if args.irregular else None
    obs = simulate_observations(
        model, theta, parse_driver(args.driver), args.T, args.h,
        seed=args.seed, key=args.key, fine_div=args.fine_div, burn=args.burn, times=times,
    )
    obs.to_csv(args.out)
    print(f"wrote {obs.n + 1} rows to {args.out} (T={obs.T:g}, h={obs.h:g})", file=sys.stderr)
    return 0


def fit_report(obs: Observations, model, opts: FitOptions, trace: bool = False):
    rep = fit(obs, model, opts, trace=trace)
    out = rep.as_dict(list(model.param_names))
    out["fd_derivatives"] = sorted(model.fd_flags)
    out["T"], out["n"], out["h"] = obs.T, obs.n, obs.h
    try:
        sig = estimate_sigma(obs, model, rep.theta_hat)
    except (LevyGQLError, ArithmeticError) as exc:
        out["sigma_error"] = str(exc)
        return rep, out
    out["sigma"] = {
        "g_prime_alpha_hat": sig.g_prime_alpha_hat.tolist(),
        "g_prime_beta_hat": sig.g_prime_beta_hat.tolist(),
        "v_alpha_beta_hat": sig.v_alpha_beta_hat.tolist(),
        "v_beta_beta_hat": sig.v_beta_beta_hat.tolist(),
        "sigma_hat": sig.sigma_hat.tolist(),
    }
    out["standard_errors"] = dict(zip(model.param_names, sig.standard_errors(obs.T).tolist()))
    out["confidence_intervals"] = {
        f"{int(level * 100)}%": dict(zip(model.param_names, confidence_intervals(rep.theta_hat, sig, obs.T, level).tolist()))
        for level in (0.90, 0.95, 0.99)
    }
    return rep, out


def cmd_fit(args) -> int:
    model = _model(args)
    obs = Observations.from_csv(args.data)
    opts = FitOptions(starts=args.starts, seed=args.seed, objective=args.objective, newton_refine=not args.no_newton)
    rep, out = fit_report(obs, model, opts, trace=bool(args.trace))
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phase"] + list(model.param_names) + ["Q", "M", "score_norm"])
            for phase, th, q, m, g in rep.trace:
                w.writerow([phase] + list(th) + [q, m, g])
    _emit_json(out, args.out)
    return 0


def _config(args, study: str) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
        cfg.study = study
        if args.out:
            cfg.output = args.out
        return cfg
    drivers = [parse_driver(d).to_config() for d in (args.driver or ["nig:10"])]
    designs = [tuple(float(v) for v in d.split(",")) for d in (args.design or ["100,0.01"])]
    kw = dict(
        model=args.model, theta0=tuple(float(v) for v in args.theta.split(",")), drivers=drivers, designs=designs,
        replications=args.M, seed=args.seed, fine_div=args.fine_div, output=args.out, study=study,
        starts=args.starts, box=args.box, burn=args.burn, workers=args.workers,
    )
    if study == "fieldscan":
        kw.update(radii=[float(r) for r in args.radii.split(",")], angles=args.angles, power=args.power)
    return ExperimentConfig(**kw)


def _finish(result, cfg) -> int:
    if cfg.output:
        csv_path, manifest = write_outputs(result, cfg.output)
        print(f"wrote {csv_path} and {manifest}", file=sys.stderr)
    rows = result.extra.get("fieldscan") if cfg.study == "fieldscan" else cell_rows(result)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0].keys()))
    w.writeheader()
    w.writerows(rows)
    return 0


def cmd_mc(args) -> int:
    cfg = _config(args, "table1")
    return _finish(run_table1(cfg), cfg)


def cmd_coverage(args) -> int:
    cfg = _config(args, "coverage")
    return _finish(run_coverage(cfg), cfg)


def cmd_fieldscan(args) -> int:
    cfg = _config(args, "fieldscan")
    return _finish(run_fieldscan(cfg), cfg)


def cmd_limits(args) -> int:
    model = _model(args)
    rep = population_limits(
        model, _theta(model, args.theta), parse_driver(args.driver),
        averaging_T=args.T_avg, h_avg=args.h_avg, seed=args.seed, burn=args.burn, fine_div=args.fine_div,
    )
    _emit_json(rep.as_dict(), args.out)
    return 0


def cmd_diagnose(args) -> int:
    model = _model(args)
    theta = _theta(model, args.theta)
    out = {"model": model.name, "theta": theta.stacked.tolist(), "fd_derivatives": sorted(model.fd_flags)}
    out["coefficient_probes"] = check_model(model, seed=args.seed)
    out["ergodicity"] = ergodicity_diagnostics(model, theta, parse_driver(args.driver) if args.driver else None)
    _emit_json(out, args.out)
    return 0


def _model_args(p, theta_default="1,1"):
    p.add_argument("--model", default="nig-hyperbolic", choices=available_models())
    p.add_argument("--theta", default=theta_default, help="comma-separated alpha then beta values")
    p.add_argument("--box", help="parameter box as lo:hi,lo:hi,...")


def _mc_args(p):
    _model_args(p)
    p.add_argument("--config", help="JSON experiment config (overrides the flags below)")
    p.add_argument("--driver", action="append", help="driver, e.g. nig:10, wiener, cp:1:rademacher (repeatable)")
    p.add_argument("--design", action="append", help="T,h pair (repeatable)")
    p.add_argument("--M", type=int, default=1000, help="replications")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fine-div", type=int, default=30)
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--burn", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output prefix for <out>.csv and <out>.manifest.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levygql", description="Gaussian quasi-likelihood estimation for Levy-driven SDEs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one observed path to CSV")
    _model_args(p)
    p.add_argument("--driver", default="nig:10")
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--h", type=float, default=0.01)
    p.add_argument("--fine-div", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--key", type=int, default=0, help="replication index of the substream")
    p.add_argument("--burn", type=float, default=0.0)
    p.add_argument("--irregular", help="file with explicit observation times")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="compute the estimator and its standard errors")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="nig-hyperbolic", choices=available_models())
    p.add_argument("--box")
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objective", choices=("contrast", "gql"), default="contrast")
    p.add_argument("--no-newton", action="store_true")
    p.add_argument("--out", help="JSON report path (default stdout)")
    p.add_argument("--trace", help="CSV of optimizer iterates")
    p.set_defaults(func=cmd_fit)

    for name, func, text in (
        ("mc", cmd_mc, "Monte Carlo table of estimator means and sds"),
        ("coverage", cmd_coverage, "Studentized coverage study"),
        ("fieldscan", cmd_fieldscan, "tail probabilities of the random field"),
    ):
        p = sub.add_parser(name, help=text)
        _mc_args(p)
        if name == "fieldscan":
            p.add_argument("--radii", default="0,1,2,3,4,5,6,8,10,15,20")
            p.add_argument("--angles", type=int, default=16)
            p.add_argument("--power", type=float, default=2.0)
        p.set_defaults(func=func)

    p = sub.add_parser("limits", help="population limit quantities by long-path averaging")
    _model_args(p)
    p.add_argument("--driver", default="nig:10")
    p.add_argument("--T-avg", type=float, default=5000.0)
    p.add_argument("--h-avg", type=float, default=0.01)
    p.add_argument("--burn", type=float, default=50.0)
    p.add_argument("--fine-div", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("diagnose", help="coefficient probes and drift-condition screen")
    _model_args(p)
    p.add_argument("--driver")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LevyGQLError, ValueError, KeyError, OSError) as exc:
        print(f"levygql: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
