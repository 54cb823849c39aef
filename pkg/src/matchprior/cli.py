"""Command-line front end.

Subcommands: ``pvalue``, ``ci``, ``simulate``, ``coverage``, ``check`` and
``replay``. Each run writes a JSON manifest (subcommand, resolved options,
seed, version, SHA-256 of the input file) next to its outputs, or to stderr
when no ``--out`` directory is given; ``replay`` re-executes a manifest.

Exit codes: 0 ok, 1 check failure, 2 input error, 3 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .approx import (
    BN,
    FORMATS,
    LOWER,
    UPPER,
    credible_interval,
    fit_null,
    p_values_from_tail,
    tail_at,
)
from .errors import MatchPriorError
from .model import Dataset, ParamPoint, exp_ratio_model, logistic_model
from .montecarlo import (
    TABLE1_METHODS,
    TABLE2_METHODS,
    SimConfig,
    report_csv,
    report_table,
    run_coverage,
    run_type1,
)
from .prior import (
    BACKWARD,
    FORWARD,
    AnalyticPrior,
    TraceSettings,
    log_prior_at,
    pde_residual,
    resolve_prior,
)

DEFAULT_SEED = 20240501
MODELS = ("exp-ratio", "logistic")

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

# per-model simulation defaults: n, desk reps, full reps, true (psi, lam), methods
SIM_DEFAULTS = {
    "exp-ratio": (10, 100_000, 1_000_000, (1.0, 1.0), TABLE1_METHODS),
    "logistic": (30, 10_000, 10_000, (0.5, -1.0), TABLE2_METHODS),
}

# interior grids for the residual check
CHECK_GRIDS = {
    "exp-ratio": ((0.5, 2.0), (0.5, 2.0)),
    "logistic": ((-0.5, 1.5), (-1.5, 0.5)),
}


class InputError(Exception):
    """Malformed input: bad CSV, bad flag combination."""


def fmt6(v):
    return f"{v:.6g}"


# --- data loading -----------------------------------------------------------

def load_csv(path, model_id):
    """Read an ``x,y`` CSV; diagnostics name the file line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    if header != ["x", "y"]:
        raise InputError(f"{path}, line 1: header must be 'x,y', got {','.join(rows[0])!r}")
    xs, ys = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise InputError(f"{path}, line {line}: expected 2 columns, got {len(row)}")
        vals = []
        for col, cell in zip("xy", row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}, line {line}, column {col}: not a number: {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}, line {line}, column {col}: value must be finite")
            vals.append(v)
        x, y = vals
        if model_id == "exp-ratio":
            for col, v in zip("xy", vals):
                if v <= 0:
                    raise InputError(f"{path}, line {line}, column {col}: exp-ratio "
                                     f"values must be positive, got {v!r}")
        elif y not in (0.0, 1.0):
            raise InputError(f"{path}, line {line}, column y: logistic response must be "
                             f"0 or 1, got {row[1].strip()!r}")
        xs.append(x)
        ys.append(y)
    if len(xs) < 2:
        raise InputError(f"{path}: need at least two data rows, got {len(xs)}")
    data = Dataset(np.array(xs), np.array(ys))
    m = exp_ratio_model(data.n) if model_id == "exp-ratio" else logistic_model(data.x)
    return m, data


def sha256_of(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# --- manifest ---------------------------------------------------------------

_NOT_CONFIG = ("func", "out", "command")


def make_manifest(args):
    config = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    csv_path = getattr(args, "csv", None)
    return {
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "input_sha256": sha256_of(csv_path) if csv_path else None,
    }


def emit(args, files, manifest):
    """Write ``files`` (name -> text) and the manifest into ``args.out``."""
    if args.out is None:
        print(json.dumps(manifest, sort_keys=True), file=sys.stderr)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _prior(name):
    try:
        return resolve_prior(name)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _settings(args, convention=None):
    return TraceSettings(rtol=args.rtol, atol=args.atol, n_panels=args.panels,
                         convention=convention or args.convention)


# --- subcommands ------------------------------------------------------------

def cmd_pvalue(args):
    m, data = load_csv(args.csv, args.model)
    prior = _prior(args.ic)
    lo, hi = m.domain[0]
    if not lo < args.psi0 < hi:
        raise InputError(f"--psi0 {args.psi0!r} outside the {args.model} domain ({lo}, {hi})")
    settings = _settings(args)
    nf = fit_null(m, data, args.psi0)
    tr = tail_at(m, data, args.psi0, prior, settings, nf)
    tail = tr.tail(args.format)
    one, two = p_values_from_tail(tail, args.side)
    result = {
        "psi_hat": nf.w_hat.psi, "lambda_hat": nf.w_hat.lam,
        "lambda_hat0": nf.w0.lam, "R": tr.R, "T": tr.T,
        "tail": tail, "p_one_sided": one, "p_two_sided": two,
        "near_singular": tr.near_singular, "lr_clamped": tr.lr_clamped,
    }
    lines = [f"model {args.model}, n={data.n}, psi0={fmt6(args.psi0)}, "
             f"prior {prior.name}, format {args.format.upper()}"]
    for key, v in result.items():
        lines.append(f"{key:14s} {v if isinstance(v, bool) else fmt6(v)}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    emit(args, {"pvalue.txt": text, "pvalue.json": json.dumps(result, indent=2) + "\n"},
         make_manifest(args))
    return EXIT_OK


def cmd_ci(args):
    if not 0.0 < args.level < 1.0:
        raise InputError("--level must lie in (0, 1)")
    m, data = load_csv(args.csv, args.model)
    prior = _prior(args.ic)
    lo, hi = credible_interval(m, data, prior, args.level, args.format, _settings(args))
    text = (f"{args.level:g} credible interval for psi ({prior.name}, "
            f"{args.format.upper()}): ({fmt6(lo)}, {fmt6(hi)})\n")
    print(text, end="")
    emit(args, {"ci.txt": text,
                "ci.json": json.dumps({"level": args.level, "lower": lo, "upper": hi}) + "\n"},
         make_manifest(args))
    return EXIT_OK


def _sim_config(args):
    n_def, desk, full, truth, methods = SIM_DEFAULTS[args.model]
    if args.reps is None:
        args.reps = full if args.scale == "full" else desk
    if args.n is None:
        args.n = n_def
    if args.methods is None:
        args.methods = ",".join(methods)
    if args.true_psi is None:
        args.true_psi = truth[0]
    if args.true_lambda is None:
        args.true_lambda = truth[1]
    if args.psi0 is None:
        args.psi0 = args.true_psi
    if args.threads < 1:
        raise InputError("--threads must be >= 1")
    if args.n < 2:
        raise InputError("--n must be >= 2")
    try:
        return SimConfig(
            model_id=args.model, n=args.n, reps=args.reps,
            true_params=(args.true_psi, args.true_lambda), psi0=args.psi0,
            alpha=args.alpha, methods=tuple(s.strip() for s in args.methods.split(",")),
            master_seed=args.seed, convention=args.convention, side=args.side,
            rtol=args.rtol, atol=args.atol, n_panels=args.panels)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_simulate(args):
    cfg = _sim_config(args)
    report = run_type1(cfg, workers=args.threads)
    table = report_table(report)
    print(table, end="")
    emit(args, {"type1.csv": report_csv(report), "type1.txt": table}, make_manifest(args))
    return EXIT_OK


def cmd_coverage(args):
    if not 0.0 < args.level < 1.0:
        raise InputError("--level must lie in (0, 1)")
    cfg = _sim_config(args)
    counts = run_coverage(cfg, args.level, args.format, workers=args.threads)
    lines = [f"{args.level:g} {args.format.upper()} credible intervals, {cfg.model_id} "
             f"n={cfg.n}, {cfg.reps} replicates, true psi {fmt6(cfg.true_params[0])}"]
    rows = ["method,covered,total,degenerate,rate"]
    for c in counts:
        lines.append(f"  {c.method:24s} {c.covered:7d} / {c.total:<7d} "
                     f"({c.degenerate} degenerate)")
        rows.append(f"{c.method},{c.covered},{c.total},{c.degenerate},{c.rate!r}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    emit(args, {"coverage.csv": "\n".join(rows) + "\n", "coverage.txt": text},
         make_manifest(args))
    return EXIT_OK


def _check_model(args):
    rng = np.random.default_rng(args.seed)
    if args.model == "exp-ratio":
        return exp_ratio_model(args.n or 10)
    return logistic_model(rng.random(args.n or 30))


def cmd_check(args):
    if args.grid < 1:
        raise InputError("--grid must be >= 1")
    m = _check_model(args)
    prior = _prior(args.ic)
    settings = _settings(args, BACKWARD)
    (p_lo, p_hi), (l_lo, l_hi) = CHECK_GRIDS[args.model]
    anchor = ParamPoint(args.anchor if args.anchor is not None else p_lo, 0.0)
    if isinstance(prior, AnalyticPrior):
        def z(w):
            return log_prior_at(m, prior, w)
    else:
        def z(w):
            return log_prior_at(m, prior, w, anchor, settings)
    worst = 0.0
    rows = ["psi,lambda,residual"]
    for psi in np.linspace(p_lo, p_hi, args.grid):
        for lam in np.linspace(l_lo, l_hi, args.grid):
            r = pde_residual(m, z, (psi, lam), args.step)
            worst = max(worst, abs(r))
            rows.append(f"{psi!r},{lam!r},{r!r}")
    ok = worst <= args.threshold
    text = (f"{args.model}, prior {prior.name}, {args.grid}x{args.grid} grid: "
            f"max |residual| = {fmt6(worst)} ({'ok' if ok else 'FAIL'}, "
            f"threshold {args.threshold:g})\n")
    print(text, end="")
    emit(args, {"check.csv": "\n".join(rows) + "\n", "check.txt": text},
         make_manifest(args))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_replay(args):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        sub = manifest["subcommand"]
        config = dict(manifest["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"{args.manifest}: not a readable manifest ({exc})") from exc
    if sub not in COMMANDS or sub == "replay":
        raise InputError(f"{args.manifest}: cannot replay subcommand {sub!r}")
    if manifest.get("version") != __version__:
        print(f"warning: manifest from version {manifest.get('version')}, "
              f"running {__version__}", file=sys.stderr)
    if config.get("csv") and sha256_of(config["csv"]) != manifest.get("input_sha256"):
        raise InputError(f"{config['csv']}: contents differ from the manifest digest")
    ns = argparse.Namespace(command=sub, out=args.out, **config)
    return COMMANDS[sub](ns)


COMMANDS = {
    "pvalue": cmd_pvalue,
    "ci": cmd_ci,
    "simulate": cmd_simulate,
    "coverage": cmd_coverage,
    "check": cmd_check,
    "replay": cmd_replay,
}


# --- parser -----------------------------------------------------------------

def _common(p, convention=BACKWARD):
    p.add_argument("--model", choices=MODELS, default="exp-ratio")
    p.add_argument("--ic", default="ic-default",
                   help="prior preset: ic-default, ic-loglambda, qfam:<q>[@center], "
                        "analytic-invpsi, analytic-invpsilambda")
    p.add_argument("--format", choices=FORMATS, default=BN)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"master seed (default {DEFAULT_SEED})")
    p.add_argument("--out", default=None, help="directory for outputs and manifest.json")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--convention", choices=(BACKWARD, FORWARD), default=convention,
                   help="how the log-prior ratio is traced (see README)")
    p.add_argument("--side", choices=(LOWER, UPPER), default=LOWER,
                   help="one-sided p-value: lower Pr(R <= r) or upper Pr(R >= r)")
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--panels", type=int, default=128, help="Simpson panels (even)")


def _sim_flags(p):
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--scale", choices=("desk", "full"), default="desk",
                   help="default replicate count when --reps is absent")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--methods", default=None,
                   help="comma list of lrt, ic-default, ic-loglambda, qfam:<q>, "
                        "analytic-invpsi, analytic-invpsilambda")
    p.add_argument("--true-psi", type=float, default=None)
    p.add_argument("--true-lambda", type=float, default=None)
    p.add_argument("--psi0", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="matchprior", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pvalue", help="p-values for H0: psi = psi0 on a CSV dataset")
    p.add_argument("csv")
    p.add_argument("--psi0", type=float, required=True)
    _common(p)

    p = sub.add_parser("ci", help="equal-tailed credible interval for psi")
    p.add_argument("csv")
    p.add_argument("--level", type=float, default=0.90)
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo type-I error table")
    _common(p, FORWARD)
    _sim_flags(p)

    p = sub.add_parser("coverage", help="Monte Carlo credible-interval coverage")
    _common(p, FORWARD)
    _sim_flags(p)
    p.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("check", help="PDE residual of a prior over a grid")
    _common(p)
    p.add_argument("--n", type=int, default=None, help="sample size behind the information")
    p.add_argument("--grid", type=int, default=5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=None, help="finite-difference step")
    p.add_argument("--anchor", type=float, default=None,
                   help="psi of the initial curve (default: low end of the grid)")
    p.set_defaults(rtol=1e-12, atol=1e-14)

    p = sub.add_parser("replay", help="re-run a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (MatchPriorError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
