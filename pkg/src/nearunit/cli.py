"""Command-line entry point: ``nearunit {gen,fit,exp,limit,verify,replay}``.

Every command that writes files also writes ``manifest.json`` next to them;
``nearunit replay MANIFEST`` reruns the recorded command.

Exit codes: 0 ok, 1 usage, 2 validation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, presets
from .ar1_sim import read_series_csv, simulate, write_series_csv
from .errors import NumericalError, ValidationError
from .estimators import FIT_COLUMNS, fit_series
from .limit_dist import LimitLawConfig, sample_draws
from .montecarlo import (
    config_dict,
    kde_curve,
    ks_statistic,
    qq_data,
    run_experiment,
    summary_dict,
    write_records_csv,
    write_records_json,
    ExperimentSpec,
)
from .verify import run_all

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
MANIFEST = "manifest.json"
# knobs that never change results and are therefore not replayed
_VOLATILE = ("out", "threads", "func")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{float(v):.17g}"


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, outputs: list[str], extra: dict | None = None) -> None:
    params = {k: v for k, v in vars(args).items() if k not in _VOLATILE}
    manifest = {
        "command": args.command,
        "tool_version": __version__,
        "master_seed": getattr(args, "seed", None),
        "parameters": params,
        "threads": getattr(args, "threads", 1),
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _model_cell(args) -> dict:
    return {
        "gamma": args.gamma,
        "beta": args.beta,
        "n": args.n,
        "innovation": args.innovation,
        "init": args.init,
        "kappa_exp": args.kappa_exp,
        "outliers": args.outliers,
        "outlier_placement": args.outlier_placement,
    }


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    cfg = presets.build_ar1(_model_cell(args))
    series = simulate(cfg, args.seed, args.replication)
    out = _outdir(args)
    if args.format == "csv":
        name = "series.csv"
        write_series_csv(series, out / name)
    else:
        name = "series.json"
        doc = {
            "y0": series.y0,
            "y": series.y.tolist(),
            "y_clean": series.y_clean.tolist(),
            "eps": series.eps.tolist(),
            "outlier_indices": [int(i) for i in series.outlier_indices],
        }
        (out / name).write_text(json.dumps(doc) + "\n")
    _write_manifest(out, args, [name], {"resolved": config_dict(cfg)})
    print(f"rho_n = {cfg.rho:.4f} ({cfg.rho!r})")
    if cfg.kappa is not None:
        print(f"kappa_n = {cfg.kappa}")
    print(f"wrote {out / name}")
    return EXIT_OK


def cmd_fit(args) -> int:
    y0, y = read_series_csv(args.input)
    cfg = None
    if args.gamma is not None:
        if args.n is not None and args.n != len(y):
            raise ValidationError(f"--n {args.n} does not match the series length {len(y)}")
        args.n = len(y)
        cfg = presets.build_ar1(_model_cell(args))
    rho_true = args.rho_true if args.rho_true is not None else (cfg.rho if cfg else None)
    if rho_true is None:
        raise ValidationError("fit needs --rho-true or the model flags (--gamma, --beta, --init)")
    rec = fit_series(y0, y, cfg, rho_true)
    row = {"rho_true": rho_true, **rec.row(), "regime": rec.regime}
    out = _outdir(args)
    if args.format == "csv":
        name = "fit.csv"
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rho_true", *FIT_COLUMNS, "regime"])
            w.writerow([_fmt(rho_true), *(_fmt(row[c]) for c in FIT_COLUMNS), rec.regime])
    else:
        name = "fit.json"
        clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}
        (out / name).write_text(json.dumps(clean, indent=2) + "\n")
    _write_manifest(out, args, [name])
    for k in ("rho_lad", "rho_ols", "f0_hat", "t_stat", "norm_stat"):
        print(f"{k:>9} = {_fmt(row[k]) or 'n/a'}")
    return EXIT_OK


def _write_curve(path: Path, labelled_samples, lo: float, hi: float, points: int) -> None:
    grid = np.linspace(lo, hi, points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "x", "density"])
        for label, samples in labelled_samples:
            samples = samples[np.isfinite(samples)]
            for x, d in zip(grid, kde_curve(samples, grid)):
                w.writerow([label, _fmt(x), _fmt(d)])


def _write_qq(path: Path, labelled_samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "theoretical", "empirical"])
        for label, samples in labelled_samples:
            theo, emp = qq_data(samples[np.isfinite(samples)])
            for a, b in zip(theo, emp):
                w.writerow([label, _fmt(a), _fmt(b)])


def cmd_exp(args) -> int:
    if args.reps is not None and args.reps < 1:
        raise ValidationError("--reps must be >= 1")
    if args.preset:
        preset = presets.load(args.preset)
        specs = presets.experiment_specs(preset, args.seed, args.reps)
    else:
        missing = [f for f in ("gamma", "n", "reps") if getattr(args, f) is None]
        if missing:
            raise UsageError("exp: without --preset these flags are required: " + ", ".join("--" + m for m in missing))
        preset = {}
        cell = _model_cell(args)
        specs = [ExperimentSpec(presets.build_ar1(cell), args.reps, args.seed, reference=args.reference,
                                label=presets.cell_label(cell))]

    results = []
    for spec in specs:
        res = run_experiment(spec, args.threads)
        results.append(res)
        lad, ols = res.summaries["rho_lad"], res.summaries["rho_ols"]
        print(f"{spec.label:<40} rho={spec.ar1.rho:.4f}  LAD em={lad.em:.4f} mse={lad.mse:.3g}"
              f"  OLS em={ols.em:.4f} mse={ols.mse:.3g}"
              + "".join(f"  KS[{k}]={v:.4f}" for k, v in res.ks.items()))

    out = _outdir(args)
    outputs = []
    if args.format == "csv":
        write_records_csv(results, out / "records.csv")
        outputs.append("records.csv")
    else:
        write_records_json(results, out / "records.json")
        outputs.append("records.json")
    (out / "summary.json").write_text(json.dumps(summary_dict(results), indent=2) + "\n")
    outputs.append("summary.json")
    if "curve" in preset:
        c = preset["curve"]
        _write_curve(out / "curve.csv", [(r.spec.label, r.values(c["statistic"])) for r in results],
                     c["lo"], c["hi"], c["points"])
        outputs.append("curve.csv")
    if "qq" in preset:
        _write_qq(out / "qq.csv", [(r.spec.label, r.values(preset["qq"])) for r in results])
        outputs.append("qq.csv")
    _write_manifest(out, args, outputs, {"preset": preset} if preset else None)
    print(f"wrote {', '.join(outputs)} to {out}")
    return EXIT_OK


def cmd_limit(args) -> int:
    if args.preset:
        preset = presets.load(args.preset)
        configs = presets.limit_configs(preset)
        reps = args.reps if args.reps is not None else preset["reps"]
    else:
        if args.gamma is None:
            raise UsageError("limit: --gamma is required without --preset")
        preset = {}
        configs = [(f"gamma={args.gamma:g}",
                    LimitLawConfig(args.gamma, args.mean_abs, args.f0, args.grid, args.route, args.n))]
        reps = args.reps if args.reps is not None else 10_000
    if reps < 10:
        raise ValidationError("--reps must be >= 10 for the KS diagnostic")

    out = _outdir(args)
    diagnostics = []
    curves = []
    with open(out / "draws.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "replication", "int_LdK", "int_w_L2", "D", "Lstat"])
        for label, cfg in configs:
            batch = sample_draws(cfg, reps, args.seed, workers=args.threads)
            for i in range(len(batch)):
                d = batch.draw(i)
                w.writerow([label, batch.start + i, _fmt(d.int_LdK), _fmt(d.int_w_L2), _fmt(d.D), _fmt(d.Lstat)])
            ks = ks_statistic(batch.self_normalized, "normal")
            diagnostics.append({"cell": label, "gamma": cfg.gamma, "route": cfg.route.value, "grid": cfg.grid_m,
                                "n": cfg.n, "reps": reps, "ks": ks})
            print(f"{label:<14} route={cfg.route.value:<8} reps={reps}  KS(2 f0 L, N(0,1)) = {ks:.4f}")
            if "curve" in preset:
                stat = preset["curve"]["statistic"]
                curves.append((label, getattr(batch, stat)))
    (out / "diagnostics.json").write_text(json.dumps(diagnostics, indent=2) + "\n")
    outputs = ["draws.csv", "diagnostics.json"]
    if curves:
        c = preset["curve"]
        _write_curve(out / "curve.csv", curves, c["lo"], c["hi"], c["points"])
        outputs.append("curve.csv")
    _write_manifest(out, args, outputs, {"preset": preset} if preset else None)
    print(f"wrote {', '.join(outputs)} to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_all()
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if args.out:
        out = _outdir(args)
        report = [{"name": c.name, "passed": c.passed, "worst": c.worst, "tol": c.tol, "detail": c.detail}
                  for c in checks]
        (out / "verify.json").write_text(json.dumps(report, indent=2) + "\n")
        _write_manifest(out, args, ["verify.json"])
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    command = manifest.get("command")
    if command not in _COMMANDS or command == "replay":
        raise ValidationError(f"{args.manifest}: cannot replay command {command!r}")
    # the manifest echoes every resolved knob, so it fully determines the namespace
    ns = argparse.Namespace(**manifest["parameters"])
    ns.command, ns.out, ns.threads = command, args.out, args.threads
    return _COMMANDS[command](ns)


_COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "exp": cmd_exp, "limit": cmd_limit, "verify": cmd_verify}


# ------------------------------------------------------------------ parser


def _add_common(p, out_required: bool = True):
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1, help="worker processes; never changes results")


def _add_model(p, required: bool):
    p.add_argument("--gamma", type=float, required=required)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--n", type=int, required=required)
    p.add_argument("--innovation", choices=("normal", "uniform"), default="normal")
    p.add_argument("--init", choices=("zero", "full-past", "truncated"), default="zero")
    p.add_argument("--kappa-exp", type=float, default=1.3)
    p.add_argument("--outliers", default="none", help="none | const:VALUE:FRAC | scaledmax:MULT:FRAC")
    p.add_argument("--outlier-placement", choices=("innovation", "observed"), default="innovation")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nearunit", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"nearunit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="simulate one AR(1) path", allow_abbrev=False)
    _add_model(p, required=True)
    p.add_argument("--replication", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="LAD/OLS fit of a series CSV", allow_abbrev=False)
    p.add_argument("--input", required=True, help="CSV with columns i, y (row i=0 holds y0)")
    _add_model(p, required=False)
    p.add_argument("--rho-true", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("exp", help="Monte Carlo experiment", allow_abbrev=False)
    p.add_argument("--preset", choices=[n for n in presets.NAMES if n.startswith("table") or n in ("fig1", "fig2")])
    _add_model(p, required=False)
    p.add_argument("--reps", type=int)
    p.add_argument("--reference", choices=("none", "normal", "cauchy"), default="cauchy")
    _add_common(p)
    p.set_defaults(func=cmd_exp)

    p = sub.add_parser("limit", help="draws from D(gamma) and L(gamma)", allow_abbrev=False)
    p.add_argument("--preset", choices=("fig3", "fig4"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--route", choices=("gaussian", "ar1"), default="gaussian")
    p.add_argument("--grid", type=int, default=2000)
    p.add_argument("--n", type=int, help="sample size of the finite-AR route (default: --grid)")
    p.add_argument("--reps", type=int)
    p.add_argument("--mean-abs", type=float, default=math.sqrt(2.0 / math.pi))
    p.add_argument("--f0", type=float, default=1.0 / math.sqrt(2.0 * math.pi))
    _add_common(p)
    p.set_defaults(func=cmd_limit)

    p = sub.add_parser("verify", help="exact identity checks", allow_abbrev=False)
    p.add_argument("--out", help="optional directory for verify.json")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest", allow_abbrev=False)
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
