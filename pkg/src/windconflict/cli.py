"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""
import argparse
import sys

from . import pipeline
from .config import load_config
from .errors import ConfigError, DataError, NumericalError, WindConflictError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return 1


def _config(args):
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = args.output_dir
    if getattr(args, "M", None) is not None:
        overrides.update(M=args.M, delta=None)
    if getattr(args, "delta", None) is not None:
        overrides.update(delta=args.delta, M=None)
    return cfg.with_changes(**overrides) if overrides else cfg


def cmd_ingest(args, out):
    cfg = _config(args)
    ens = pipeline.ingest(cfg)
    print(f"pooled {ens.n_members} members on a {ens.grid.shape[0]}x{ens.grid.shape[1]} grid "
          f"-> {pipeline.RunDir(cfg.output_dir).ensemble}", file=out)


def cmd_decompose(args, out):
    cfg = _config(args)
    exp = pipeline.decompose(cfg)
    from .mukl import explained_variance_table

    print(f"M = {exp.M} of {exp.n_members} members", file=out)
    print("k\tpercent\tcumulative", file=out)
    for k, pct, cum in explained_variance_table(exp, exp.M):
        print(f"{k}\t{pct:.4f}\t{cum:.4f}", file=out)


def cmd_surrogate(args, out):
    cfg = _config(args)
    status = pipeline.surrogate(cfg)
    for aid, st in status.items():
        print(f"{aid}: {st['status']}" + (f" ({st['message']})" if st["status"] != "ok" else ""), file=out)


def cmd_detect(args, out):
    cfg = _config(args)
    rep = pipeline.detect(cfg)
    print("\n".join(pipeline.summary_lines(rep)), file=out)


def cmd_report(args, out):
    print(pipeline.report(args.run_dir, figures=args.figures), end="", file=out)


def cmd_sweep(args, out):
    cfg = _config(args)
    rows = pipeline.sweep(cfg, pipeline.parse_range(args.sweep_M))
    print("M\tpair\tverdict\tprobability\tseconds", file=out)
    for r in rows:
        print(f"{r[0]}\t{r[1]}\t{r[2]}\t{r[3]}\t{r[7]}", file=out)


def cmd_synth(args, out):
    from .ensemble_io import CorrelationSpec, WindGrid, generate_synthetic_ensemble, save_ensemble

    lat0, lat1, n_lat = args.lat
    lon0, lon1, n_lon = args.lon
    grid = WindGrid.regular(lat0, lat1, int(n_lat), lon0, lon1, int(n_lon))
    spec = CorrelationSpec(args.length, args.rho, args.sigma_u, args.sigma_v, args.mean_u, args.mean_v)
    ens = generate_synthetic_ensemble(args.seed, grid, args.members, spec)
    save_ensemble(ens, args.output)
    print(f"wrote {ens.n_members} members to {args.output}", file=out)


def cmd_dump(args, out):
    from .apc import dump_coefficients, load_surrogate

    print(dump_coefficients(load_surrogate(args.archive), args.every), end="", file=out)


def build_parser():
    parser = argparse.ArgumentParser(prog="windconflict", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, helptext, func):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="scenario configuration file")
        p.add_argument("--output-dir", help="override the configured output directory")
        p.set_defaults(func=func)
        return p

    with_config("ingest", "pool ensemble files into the run directory", cmd_ingest)
    p = with_config("decompose", "muKL decomposition and explained-variance table", cmd_decompose)
    order = p.add_mutually_exclusive_group()
    order.add_argument("--M", type=int, help="truncation order (overrides the config)")
    order.add_argument("--delta", type=float, help="explained-variance threshold (overrides the config)")
    with_config("surrogate", "plan at quadrature nodes and fit surrogates", cmd_surrogate)
    with_config("detect", "conflict verdicts and probabilities (runs missing stages)", cmd_detect)
    p = with_config("sweep", "repeat the analysis over a range of truncation orders", cmd_sweep)
    p.add_argument("--sweep-M", required=True, metavar="A..B", help="inclusive range of M values")

    p = sub.add_parser("report", help="summary text and plot CSVs from a detected run")
    p.add_argument("run_dir")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic Gaussian wind ensemble")
    p.add_argument("output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--members", type=int, default=300)
    p.add_argument("--lat", type=float, nargs=3, default=(24.5, 29.5, 11), metavar=("LAT0", "LAT1", "N"))
    p.add_argument("--lon", type=float, nargs=3, default=(-19.5, -13.5, 13), metavar=("LON0", "LON1", "N"))
    p.add_argument("--length", type=float, default=6.0, help="correlation length (deg)")
    p.add_argument("--rho", type=float, default=0.3, help="u-v correlation")
    p.add_argument("--sigma-u", type=float, default=2.5)
    p.add_argument("--sigma-v", type=float, default=2.5)
    p.add_argument("--mean-u", type=float, default=12.0)
    p.add_argument("--mean-v", type=float, default=-3.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dump-surrogate", help="print the coefficient table of a surrogate archive")
    p.add_argument("archive")
    p.add_argument("--every", type=int, default=1, help="print every n-th time step")
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args, out)
    except WindConflictError as exc:
        stage = getattr(exc, "stage_context", None)
        prefix = f"error [{stage}]" if stage else "error"
        print(f"{prefix}: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
