"""Command-line entry point: ``gmcopula {fit,simulate,diagnose,aw,precision}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gmcopula import dependence as dep
from gmcopula import inference, refcopulas
from gmcopula.exceptions import (
    ConstraintViolation,
    DegenerateFitError,
    DimensionError,
    DomainError,
    NotPositiveDefiniteError,
)
from gmcopula.io import (
    DataError,
    load_csv,
    rank_transform,
    read_fit_record,
    substream_seed,
    write_aic_table,
    write_curve_csv,
    write_fit_record,
    write_rows_csv,
    write_sample_csv,
)
from gmcopula.model import simulate as simulate_mixture
from gmcopula.numerics import DEFAULT_TARGET_ABS_ERR

logger = logging.getLogger("gmcopula")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
FAMILIES = ("logistic", "inverted-logistic", "asymmetric-logistic")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Flags of one invocation after parsing and checking."""

    command: str
    input: Path | None = None
    output_dir: Path = Path(".")
    k: list = field(default_factory=lambda: [1])
    exchangeable: bool = False
    seed: int = 0
    bootstrap_b: int = 250
    r_grid: np.ndarray | None = None
    ue: list = field(default_factory=list)
    ray: np.ndarray | None = None
    near_zero_threshold: float = dep.DEFAULT_NEAR_ZERO
    target_abs_err: float = DEFAULT_TARGET_ABS_ERR
    fit_record: Path | None = None
    n: int = 1000
    family: str | None = None
    alpha: float = 0.5
    d: int = 2
    t1: float = 1.0
    t2: float = 1.0
    n_starts: int = 5
    w_grid: np.ndarray | None = None


def _floats(text):
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _r_grid(text):
    vals = _floats(text)
    if vals.size == 3 and vals[2] >= 2 and float(vals[2]).is_integer():
        # "start,stop,count" is read as an equispaced grid
        return np.linspace(vals[0], vals[1], int(vals[2]))
    return vals


def build_parser():
    p = _Parser(prog="gmcopula", description="Gaussian mixture copula fitting and tail diagnostics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, needs_input=True):
        sp.add_argument("--input", type=Path, required=needs_input, help="CSV file with a header row")
        sp.add_argument("--output-dir", type=Path, default=Path("."))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--target-abs-err", type=float, default=DEFAULT_TARGET_ABS_ERR)
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    def model_source(sp):
        sp.add_argument("--fit-record", type=Path, help="fit record written by 'fit'")
        sp.add_argument("--k", type=int, action="append", help="components (repeatable for 'fit')")
        sp.add_argument("--exchangeable", action="store_true")
        sp.add_argument("--n-starts", type=int, default=5)

    sp = sub.add_parser("fit", help="fit one model per --k and compare them by AIC")
    common(sp)
    model_source(sp)

    sp = sub.add_parser("simulate", help="draw a seeded sample from a fit or a reference copula")
    common(sp, needs_input=False)
    sp.add_argument("--fit-record", type=Path)
    sp.add_argument("--family", choices=FAMILIES)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--t1", type=float, default=1.0)
    sp.add_argument("--t2", type=float, default=1.0)
    sp.add_argument("--n", type=int, default=1000)

    sp = sub.add_parser("diagnose", help="model and empirical chi/eta curves with bootstrap bands")
    common(sp)
    model_source(sp)
    sp.add_argument("--bootstrap-b", type=int, default=250)
    sp.add_argument("--r-grid", type=_r_grid, help="comma-separated levels, or start,stop,count")
    sp.add_argument("--ray", type=_floats, help="w1,...,wd: also write lambda along this ray")

    sp = sub.add_parser("aw", help="conditional A_w probabilities over a grid of rays")
    common(sp)
    model_source(sp)
    sp.add_argument("--ue", type=float, action="append", help="exponential-margin level (repeatable)")
    sp.add_argument("--w-grid", type=_floats, help="comma-separated w values in (0, 1)")

    sp = sub.add_parser("precision", help="off-diagonal precision entries of each component")
    common(sp, needs_input=False)
    model_source(sp)
    sp.add_argument("--near-zero-threshold", type=float, default=dep.DEFAULT_NEAR_ZERO)
    return p


def config_from_args(args):
    """Check flag combinations before any data is read or computed."""
    cfg = RunConfig(command=args.command)
    for name in vars(args):
        if hasattr(cfg, name) and getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    if not cfg.target_abs_err >= 1e-8:
        raise UsageError("--target-abs-err must be at least 1e-8")
    if any(k < 1 for k in cfg.k):
        raise UsageError("--k must be at least 1")
    if args.command != "fit" and len(cfg.k) > 1:
        raise UsageError(f"'{args.command}' takes a single --k")
    if getattr(args, "n_starts", 1) < 1:
        raise UsageError("--n-starts must be at least 1")
    if args.command == "simulate":
        if (cfg.fit_record is None) == (cfg.family is None):
            raise UsageError("simulate needs exactly one of --fit-record or --family")
        if cfg.n < 1:
            raise UsageError("--n must be at least 1")
        if cfg.family == "asymmetric-logistic" and cfg.d != 2:
            raise UsageError("the asymmetric logistic family is bivariate (--d 2)")
    if args.command == "precision":
        if cfg.fit_record is None and cfg.input is None:
            raise UsageError("precision needs --fit-record or --input")
        if cfg.near_zero_threshold < 0:
            raise UsageError("--near-zero-threshold must be nonnegative")
    if getattr(args, "fit_record", None) is not None and getattr(args, "k", None) and args.command != "fit":
        raise UsageError("--k and --fit-record are mutually exclusive")
    if args.command == "fit" and cfg.fit_record is not None:
        raise UsageError("fit does not take --fit-record")
    if args.command == "diagnose":
        if cfg.bootstrap_b < 1:
            raise UsageError("--bootstrap-b must be positive")
        if cfg.r_grid is not None:
            r = np.asarray(cfg.r_grid)
            if r.size == 0 or np.any((r <= 0) | (r >= 1)) or np.any(np.diff(r) <= 0):
                raise UsageError("--r-grid must be increasing levels inside (0, 1)")
        if cfg.ray is not None and (np.any(cfg.ray < 0) or abs(cfg.ray.sum() - 1) > 1e-9):
            raise UsageError("--ray weights must be nonnegative and sum to one")
    if args.command == "aw":
        if not cfg.ue:
            raise UsageError("aw needs at least one --ue")
        if any(u <= 0 for u in cfg.ue):
            raise UsageError("--ue values must be positive")
        if cfg.w_grid is not None and np.any((cfg.w_grid <= 0) | (cfg.w_grid >= 1)):
            raise UsageError("--w-grid values must lie in (0, 1)")
    return cfg


# -- commands ------------------------------------------------------------------


def _load_sample(cfg):
    data = load_csv(cfg.input)
    return data, rank_transform(data)


def _fit_one(u, k, cfg):
    opts = inference.FitOptions(
        k=k,
        exchangeable=cfg.exchangeable,
        n_starts=cfg.n_starts,
        seed=substream_seed(cfg.seed, f"fit/k={k}"),
    )
    res = inference.fit(u, opts)
    logger.info("k=%d: loglik=%.4f aic=%.4f (%.1fs)", k, res.log_likelihood, res.aic, res.elapsed_seconds)
    return res


def _model_theta(cfg, u):
    if cfg.fit_record is not None:
        theta = read_fit_record(cfg.fit_record)["theta"]
        if u is not None and theta.d != u.shape[1]:
            raise DimensionError(f"fit record has d={theta.d}, data has {u.shape[1]} columns")
        return theta
    return _fit_one(u, cfg.k[0], cfg).theta_hat


def cmd_fit(cfg):
    _, u = _load_sample(cfg)
    fits = [_fit_one(u, k, cfg) for k in sorted(set(cfg.k))]
    for res in fits:
        write_fit_record(cfg.output_dir / f"fit_k{res.k}.json", res, seed=cfg.seed)
    write_aic_table(cfg.output_dir / "aic.csv", inference.compare(fits))


def cmd_simulate(cfg):
    seed = substream_seed(cfg.seed, "simulate")
    if cfg.fit_record is not None:
        sample = simulate_mixture(read_fit_record(cfg.fit_record)["theta"], cfg.n, seed)
    elif cfg.family == "asymmetric-logistic":
        spec = refcopulas.AsymmetricLogisticSpec(cfg.alpha, cfg.t1, cfg.t2)
        sample = refcopulas.sample_asymmetric_logistic(spec, cfg.n, seed)
    else:
        spec = refcopulas.LogisticSpec(cfg.d, cfg.alpha)
        sampler = refcopulas.sample_logistic if cfg.family == "logistic" else refcopulas.sample_inverted_logistic
        sample = sampler(spec, cfg.n, seed)
    write_sample_csv(cfg.output_dir / "sample.csv", sample)


def cmd_diagnose(cfg):
    _, u = _load_sample(cfg)
    if cfg.ray is not None and cfg.ray.size != u.shape[1]:
        raise DimensionError(f"--ray has {cfg.ray.size} entries, data has {u.shape[1]} columns")
    theta = _model_theta(cfg, u)
    levels = dep.default_r_grid() if cfg.r_grid is None else np.asarray(cfg.r_grid)
    chi_m, eta_m = dep.model_curves(theta, levels, cfg.target_abs_err, seed=substream_seed(cfg.seed, "integrate"))
    write_curve_csv(cfg.output_dir / "chi_model.csv", chi_m)
    write_curve_csv(cfg.output_dir / "eta_model.csv", eta_m)
    for stat in ("chi", "eta"):
        band = dep.bootstrap_band(u, stat, levels, B=cfg.bootstrap_b, seed=substream_seed(cfg.seed, f"bootstrap/{stat}"))
        write_curve_csv(cfg.output_dir / f"{stat}_empirical.csv", band)
    if cfg.ray is not None:
        lam = np.atleast_1d(dep.lambda_model(theta, cfg.ray, levels, target_abs_err=cfg.target_abs_err, seed=substream_seed(cfg.seed, "integrate")))
        write_curve_csv(cfg.output_dir / "lambda_model.csv", dep.DependenceCurve(levels, lam, source="model", statistic="lambda"))


def cmd_aw(cfg):
    _, u = _load_sample(cfg)
    if u.shape[1] != 2:
        raise DimensionError("aw works on bivariate data")
    theta = _model_theta(cfg, u)
    w_grid = np.round(np.arange(1, 10) / 10, 10) if cfg.w_grid is None else cfg.w_grid
    seed = substream_seed(cfg.seed, "integrate")
    rows = []
    for ue in cfg.ue:
        for w in w_grid:
            a, b = dep.aw_thresholds(float(w), ue)
            rows.append(
                [float(ue), float(w), a, b,
                 dep.aw_probability_model(theta, float(w), ue, cfg.target_abs_err, seed),
                 float(dep.aw_probability_empirical(u, float(w), ue))]
            )
    write_rows_csv(cfg.output_dir / "aw.csv", ("ue", "w", "x1", "x2", "model", "empirical"), rows)


def cmd_precision(cfg):
    u = _load_sample(cfg)[1] if cfg.fit_record is None else None
    theta = _model_theta(cfg, u)
    rows = [
        [e.component + 1, e.pair[0] + 1, e.pair[1] + 1, e.value, int(e.near_zero)]
        for e in dep.precision_report(theta, cfg.near_zero_threshold)
    ]
    write_rows_csv(cfg.output_dir / "precision.csv", ("component", "i", "j", "value", "near_zero"), rows)


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "aw": cmd_aw,
    "precision": cmd_precision,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gmcopula: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if cfg.input is not None and not cfg.input.is_file():
            raise DataError(f"{cfg.input}: no such file")
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[cfg.command](cfg)
    except (DegenerateFitError, NotPositiveDefiniteError, FloatingPointError) as exc:
        print(f"gmcopula: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DimensionError, DomainError, ConstraintViolation, OSError) as exc:
        print(f"gmcopula: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
