"""Command-line front end.

Subcommands: ``simulate``, ``fit``, ``predict``, ``kde-prior`` and ``acf``.
Exit status is 0 on success, 2 on usage/input errors and 3 on numerical
failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import InputError, InvGeoError, NumericalError
from .fit import fit_mle
from .mcmc import McmcConfig, autocorrelogram, run_chain
from .model import ModelParams, Rect, SpatialDataset
from .pointprocess import InhibitionPrior, SsiConfig, sample_intensity, sample_ssi, sample_uniform
from .priors import KdePrior, UniformRect, intensity_from_covariates, plugin_bandwidth
from .quadrature import Grid, PredictiveField, bin_samples, hdr, predict_single, summarize
from .sim import simulate_measurements

log = logging.getLogger("invgeo")

EXIT_USAGE = 2
EXIT_NUMERICAL = 3

PARAM_KEYS = {"family", "mu", "sigma2", "tau2", "phi", "kappa"}
REGION_KEYS = {"xmin", "xmax", "ymin", "ymax"}
FIT_REPORT_KEYS = {"loglik", "converged", "n_evals"}

SIMULATE_KEYS = PARAM_KEYS | REGION_KEYS | {"design", "n", "delta", "lattice", "retries", "mask", "raster", "beta"}
FIT_KEYS = PARAM_KEYS | {"fix_kappa", "max_evals"}
PREDICT_KEYS = (
    PARAM_KEYS
    | REGION_KEYS
    | FIT_REPORT_KEYS
    | {"prior", "delta", "mutual", "bandwidth", "raster", "beta"}
    | {"h1", "h2", "p", "iterations", "burn_in", "thin", "max_lag"}
)
KDE_KEYS = REGION_KEYS | {"bandwidth"}


class UsageError(InputError):
    pass


class Config:
    """Merged ``key=value`` settings with typed accessors."""

    def __init__(self, values: dict, allowed: set):
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        self.values = values

    def __contains__(self, key):
        return key in self.values

    def str(self, key, default=None):
        return self.values.get(key, default)

    def float(self, key, default=None):
        if key not in self.values:
            return default
        try:
            return float(self.values[key])
        except ValueError:
            raise UsageError(f"config key {key}: expected a number, got {self.values[key]!r}") from None

    def int(self, key, default=None):
        if key not in self.values:
            return default
        try:
            return int(self.values[key])
        except ValueError:
            raise UsageError(f"config key {key}: expected an integer, got {self.values[key]!r}") from None

    def bool(self, key, default=False):
        if key not in self.values:
            return default
        v = self.values[key].lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {key}: expected a boolean, got {self.values[key]!r}")

    def floats(self, key):
        if key not in self.values:
            return None
        try:
            return [float(v) for v in self.values[key].split(",")]
        except ValueError:
            raise UsageError(f"config key {key}: expected comma-separated numbers") from None


def load_config(paths, allowed) -> Config:
    merged = {}
    for p in paths or []:
        merged.update(io.read_config(p))
    return Config(merged, allowed)


def params_from(cfg: Config, defaults: ModelParams | None = None) -> ModelParams:
    base = defaults or ModelParams()
    return ModelParams(
        mu=cfg.float("mu", base.mu),
        sigma2=cfg.float("sigma2", base.sigma2),
        tau2=cfg.float("tau2", base.tau2),
        phi=cfg.float("phi", base.phi),
        kappa=cfg.float("kappa", base.kappa),
        family=cfg.str("family", base.family),
    )


def region_from(cfg: Config, fallback: Rect | None) -> Rect | None:
    present = REGION_KEYS & set(cfg.values)
    if not present:
        return fallback
    if present != REGION_KEYS:
        raise UsageError(f"region needs all of xmin, xmax, ymin, ymax (missing {', '.join(sorted(REGION_KEYS - present))})")
    return Rect(cfg.float("xmin"), cfg.float("xmax"), cfg.float("ymin"), cfg.float("ymax"))


def bandwidth_from(cfg: Config):
    vals = cfg.floats("bandwidth")
    if vals is None:
        return None
    if len(vals) != 3:
        raise UsageError("bandwidth must be h11,h12,h22")
    return np.array([[vals[0], vals[1]], [vals[1], vals[2]]])


def parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 100x100, got {text!r}") from None
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError("grid resolution must be positive")
    return nx, ny


def parse_alphas(text: str) -> list[float]:
    try:
        alphas = [float(a) for a in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a comma-separated list, got {text!r}") from None
    if not all(0 < a < 1 for a in alphas):
        raise argparse.ArgumentTypeError("alpha levels must lie in (0, 1)")
    return alphas


def intensity_prior_from(cfg: Config):
    raster = cfg.str("raster")
    if raster is None:
        raise UsageError("intensity prior/design needs a 'raster' CSV")
    covariates, x0, y0, dx, dy = io.read_raster(raster)
    beta = cfg.floats("beta")
    if beta is None:
        if covariates.shape[2] != 1:
            raise UsageError("config key beta is required for rasters with several covariates")
        beta = [1.0]
    return intensity_from_covariates(covariates, beta, x0, y0, dx, dy)


# --------------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, SIMULATE_KEYS)
    params = params_from(cfg)
    region = region_from(cfg, Rect(0.0, 1.0, 0.0, 1.0))
    n = cfg.int("n", 201)
    design = cfg.str("design", "uniform")
    seed = np.random.SeedSequence(args.seed)
    design_seed, data_seed, mask_seed = seed.spawn(3)

    if design == "uniform":
        pts = sample_uniform(n, region, np.random.default_rng(design_seed))
    elif design == "ssi":
        lattice = parse_grid(cfg.str("lattice", "100x100"))
        ssi = SsiConfig(delta=cfg.float("delta", 0.0), n=n, lattice=lattice, rect=region)
        pts = sample_ssi(ssi, np.random.default_rng(design_seed), retries=cfg.int("retries", 0))
    elif design == "intensity":
        prior = intensity_prior_from(cfg)
        pts = sample_intensity(n, prior, np.random.default_rng(design_seed))
        region = prior.rect
    else:
        raise UsageError(f"config key design: unknown design {design!r} (uniform, ssi, intensity)")

    values = simulate_measurements(pts, params, np.random.default_rng(data_seed))
    k = cfg.int("mask", 0)
    if not 0 <= k < n:
        raise UsageError(f"config key mask: need 0 <= mask < n, got {k}")
    masked = np.zeros(n, dtype=bool)
    if k:
        masked[np.random.default_rng(mask_seed).choice(n, size=k, replace=False)] = True
    keep = ~masked

    out = Path(args.out)
    data = SpatialDataset(pts[keep], values[keep], values[masked], region)
    io.write_dataset(out / "data.csv", data)
    if k:
        truth = SpatialDataset(pts[masked], values[masked], region=region)
        io.write_dataset(out / "truth.csv", truth)
    model = params.as_dict()
    model.update(xmin=region.xmin, xmax=region.xmax, ymin=region.ymin, ymax=region.ymax)
    io.write_config(out / "model.cfg", model, comment=f"simulate design={design} n={n} seed={args.seed}")
    print(f"wrote {n - k} located and {k} orphan measurements to {out / 'data.csv'}")
    return 0


def cmd_fit(args) -> int:
    cfg = load_config(args.config, FIT_KEYS)
    data = io.read_dataset(args.data)
    family = cfg.str("family", "exponential")
    init = None
    if PARAM_KEYS - {"family"} <= set(cfg.values):
        init = params_from(cfg)
    result = fit_mle(
        data.known_locations,
        data.known_values,
        family=family,
        init=init,
        fix_kappa=cfg.float("fix_kappa"),
        max_evals=cfg.int("max_evals", 2000),
    )
    report = result.params.as_dict()
    report.update(loglik=result.loglik, converged=result.converged, n_evals=result.n_evals)
    io.write_config(Path(args.out) / "fit.cfg", report, comment=f"fit of {args.data}")
    for key, value in report.items():
        print(f"{key}={io.fmt(value)}")
    if not result.converged:
        log.warning("optimizer did not converge; best-so-far parameters reported")
    return 0


def build_prior(cfg: Config, data: SpatialDataset):
    kind = cfg.str("prior", "uniform")
    if kind == "uniform":
        return UniformRect(data.region)
    if kind == "kde":
        return KdePrior(data.known_locations, bandwidth_from(cfg), rect=data.region)
    if kind == "intensity":
        return intensity_prior_from(cfg)
    if kind == "ssi":
        delta = cfg.float("delta")
        if delta is None:
            raise UsageError("ssi prior needs config key delta")
        return InhibitionPrior(data.region, data.known_locations, delta, mutual=cfg.bool("mutual", True))
    raise UsageError(f"config key prior: unknown prior {kind!r} (uniform, kde, intensity, ssi)")


def _write_summary_and_hdrs(out: Path, field, alphas, prefix=""):
    summary = summarize(field).as_dict()
    for alpha in alphas:
        io.write_hdr(out / f"{prefix}hdr_{alpha:g}.csv", field.grid, hdr(field, alpha), alpha)
    return summary


def cmd_predict(args) -> int:
    cfg = load_config(args.config, PREDICT_KEYS)
    data = io.read_dataset(args.data)
    region = region_from(cfg, data.region)
    data = SpatialDataset(data.known_locations, data.known_values, data.orphan_values, region)
    if data.n_orphans < 1:
        raise UsageError("dataset has no orphan rows (,,value) to locate")
    params = params_from(cfg)
    prior = build_prior(cfg, data)
    grid = Grid(region, *args.grid)
    out = Path(args.out)
    alphas = args.alpha

    if args.method == "quadrature":
        field = predict_single(data, params, prior, grid)
        io.write_field(out / "density.csv", field)
        summary = _write_summary_and_hdrs(out, field, alphas)
        io.write_config(out / "summary.cfg", summary, comment="quadrature predictive summary")
        for key, value in summary.items():
            print(f"{key}={io.fmt(value)}")
        return 0

    config = McmcConfig(
        h1=cfg.float("h1"),
        h2=cfg.float("h2"),
        p=cfg.float("p", 0.5),
        iterations=cfg.int("iterations", 110_000),
        burn_in=cfg.int("burn_in", 10_000),
        thin=cfg.int("thin", 10),
        seed=args.seed,
    )
    run = run_chain(data, params, prior, config)
    cfg_used = run.config
    iters = cfg_used.burn_in + cfg_used.thin * np.arange(1, run.samples.shape[0] + 1)
    io.write_chain(out / "chain.csv", run.samples, iters)
    report = {
        "acceptance_rate": run.acceptance_rate,
        "h1": cfg_used.h1,
        "h2": cfg_used.h2,
        "p": cfg_used.p,
        "iterations": cfg_used.iterations,
        "burn_in": cfg_used.burn_in,
        "thin": cfg_used.thin,
        "seed": args.seed,
        "retained": run.samples.shape[0],
    }
    io.write_config(out / "chain_report.txt", report, comment="MCMC run report")

    max_lag = min(cfg.int("max_lag", 30), run.samples.shape[0] - 1)
    summary = {}
    acf_rows = []
    for k in range(run.n_missing):
        field = PredictiveField(grid, bin_samples(run.samples[:, k, :], grid))
        io.write_field(out / f"marginal_{k}.csv", field)
        s = _write_summary_and_hdrs(out, field, alphas, prefix=f"loc{k}_")
        summary.update({f"loc{k}_{key}": v for key, v in s.items()})
        acf_rows.append(_acf_pair(run.samples[:, k, :], max_lag))
    _write_acf(out / "acf.csv", acf_rows)
    io.write_config(out / "summary.cfg", summary, comment="binned MCMC marginal summaries")
    print(f"retained={run.samples.shape[0]} acceptance_rate={run.acceptance_rate:.4f}")
    return 0


def _acf_pair(xy: np.ndarray, max_lag: int):
    return [autocorrelogram(xy[:, 0], max_lag), autocorrelogram(xy[:, 1], max_lag)]


def _write_acf(path: Path, per_loc) -> None:
    rows = []
    for k, (ax, ay) in enumerate(per_loc):
        for lag in range(ax.size):
            rows.append([str(lag + 1), str(k), io.fmt(ax[lag]), io.fmt(ay[lag])])
    io.write_rows(path, ["lag", "loc_index", "acf_x", "acf_y"], rows)


def cmd_kde_prior(args) -> int:
    cfg = load_config(args.config, KDE_KEYS)
    data = io.read_dataset(args.data)
    region = region_from(cfg, data.region)
    bandwidth = bandwidth_from(cfg)
    if bandwidth is None:
        bandwidth = plugin_bandwidth(data.known_locations)
    prior = KdePrior(data.known_locations, bandwidth)
    grid = Grid(region, *args.grid)
    density = np.exp(prior.logpdf(grid.nodes()))
    out = Path(args.out)
    io.write_grid_values(out / "kde_prior.csv", grid, density)
    io.write_config(
        out / "kde_prior.cfg",
        {"bandwidth": ",".join(io.fmt(v) for v in (bandwidth[0, 0], bandwidth[0, 1], bandwidth[1, 1])),
         "n_points": data.n_known},
        comment="Gaussian KDE prior",
    )
    print(f"bandwidth={bandwidth[0, 0]!r},{bandwidth[0, 1]!r},{bandwidth[1, 1]!r}")
    return 0


def cmd_acf(args) -> int:
    _, samples = io.read_chain(args.chain)
    max_lag = args.max_lag
    per_loc = [_acf_pair(samples[:, k, :], max_lag) for k in range(samples.shape[1])]
    _write_acf(Path(args.out) / "acf.csv", per_loc)
    for k, (ax, ay) in enumerate(per_loc):
        below = np.flatnonzero((np.abs(ax) < 0.1) & (np.abs(ay) < 0.1))
        first = int(below[0]) + 1 if below.size else None
        print(f"loc{k}: acf_x(1)={ax[0]:.4f} acf_y(1)={ay[0]:.4f} first_lag_below_0.1={first}")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invgeo", description="Predict the missing locations of geostatistical measurements."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", action="append", default=[], metavar="FILE",
                       help="key=value settings file; may be repeated, later files win")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", metavar="DIR")

    p = sub.add_parser("simulate", help="simulate a design and measurements")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood fit on the located data")
    common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predictive distribution of missing locations")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["quadrature", "mcmc"], default="quadrature")
    p.add_argument("--grid", type=parse_grid, default=(100, 100), metavar="NXxNY")
    p.add_argument("--alpha", type=parse_alphas, default=[0.5, 0.1, 0.05])
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("kde-prior", help="export the plug-in KDE prior on a grid")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=parse_grid, default=(100, 100), metavar="NXxNY")
    p.set_defaults(func=cmd_kde_prior)

    p = sub.add_parser("acf", help="autocorrelations of a chain file")
    common(p)
    p.add_argument("--chain", required=True)
    p.add_argument("--max-lag", type=int, default=30)
    p.set_defaults(func=cmd_acf)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"invgeo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvGeoError as exc:
        print(f"invgeo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
