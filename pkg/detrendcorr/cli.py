"""Command-line interface: one subcommand per analysis stage plus ``run`` and ``render``.

Data (CSV/JSON) goes to the file named by ``-o`` or to stdout; logs go to
stderr. Exit codes: 0 success, 1 analysis failure, 2 usage or configuration
error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import (
    OUTPUT_DIR_ENV,
    RunConfig,
    configure_logging,
    load_env_file,
    parse_duration,
    parse_instant,
    parse_q_values,
    parse_scale,
    parse_scale_grid,
    resolve_jobs,
)
from .corrmat import build_matrix, read_matrix, require_defined, scale_sweep, write_matrix
from .diststats import acf, acf_decay_exponent, fit_powerlaw_tail, fit_stretched_exp
from .errors import ConfigError, DetrendCorrError, GeneratorParamError, InsufficientDataError
from .figures import plot_tree, render_figures
from .ingest import collection_metadata, load_ticks, liquidity_filter, metadata_frame, parse_supplies
from .mfdfa import DetrendConfig, generalized_hurst, single_fluctuation, singularity_spectrum, write_grid
from .mstnet import degree_tail_fit, degrees, distance_matrix, hub_summary, louvain, louvain_full_graph, mst, write_tree
from .pipeline import dump_json, run_pipeline
from .rmt import eigen_sym, filter_market_mode, filtered_matrix, mp_law, spectrum_report, top_contributors
from .series import HOURLY, Panel, build_panel, read_panel, write_panel
from .synthlab import TREE_KINDS, GeneratorSpec, generate, generate_panel

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

FLAGGED_HINT = "rerun with --allow-flagged"


def _emit_text(text: str, output: Optional[str]) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")
        logger.info("Wrote %s", output)


def _emit_json(data: Any, output: Optional[str]) -> None:
    _emit_text(dump_json(data), output)


def _window(args: argparse.Namespace):
    if args.start is None:
        raise ConfigError("--start is required")
    return parse_instant(args.start), args.days


def _panel_column(panel: Panel, label: Optional[str]) -> List[str]:
    if label is None:
        return panel.labels
    if label not in panel.labels:
        raise ConfigError(f"column '{label}' is not in the panel")
    return [label]


def cmd_ingest(args: argparse.Namespace) -> int:
    table = load_ticks(args.ticks, _window(args))
    supplies = parse_supplies(args.supplies) if args.supplies else {}
    hourly = build_panel(table, "n", HOURLY, collections=table.collections)
    frame = metadata_frame(collection_metadata(table, supplies, hourly))
    liquid = liquidity_filter(table, args.min_tx)
    frame["liquid"] = frame["collection_id"].isin(liquid)
    logger.info("%d of %d collections pass %.3g trades/day; %d records dropped", len(liquid), len(frame), args.min_tx, table.dropped)
    _emit_text(frame.to_csv(index=False, lineterminator="\n"), args.output)
    return EXIT_OK


def cmd_panel(args: argparse.Namespace) -> int:
    table = load_ticks(args.ticks, _window(args))
    dt = parse_duration(args.dt)
    supplies = parse_supplies(args.supplies) if args.supplies else {}
    collections = args.collections.split(",") if args.collections else sorted(liquidity_filter(table, args.min_tx))
    panel = build_panel(table, args.observable, dt, supplies, collections)
    if args.output in (None, "-"):
        write_panel(panel, sys.stdout)
    else:
        write_panel(panel, args.output)
    return EXIT_OK


def cmd_dist(args: argparse.Namespace) -> int:
    panel = read_panel(args.panel)
    report: Dict[str, Any] = {}
    for label in _panel_column(panel, args.column):
        values = panel.frame[label].to_numpy()
        entry: Dict[str, Any] = {}
        if args.law == "stretched":
            entry["tail"] = fit_stretched_exp(values, x_min_pct=args.x_min_pct).as_dict()
        else:
            entry["tail"] = fit_powerlaw_tail(np.abs(values), x_min_pct=args.x_min_pct).as_dict()
        curve = acf(np.abs(values), args.max_lag)
        entry["acf_abs"] = curve.as_dict()
        try:
            kappa, stderr, r2 = acf_decay_exponent(curve)
            entry["acf_decay"] = {"kappa": kappa, "stderr": stderr, "r2": r2}
        except InsufficientDataError as e:
            entry["acf_decay"] = {"error": str(e)}
        report[label] = entry
    _emit_json(report, args.output)
    return EXIT_OK


def _detrend_config(args: argparse.Namespace, dt: int, q_values: Sequence[float]) -> DetrendConfig:
    s_grid = parse_scale_grid(args.scales, dt) if getattr(args, "scales", None) else None
    return DetrendConfig(m=args.order, q_grid=tuple(q_values), s_grid=s_grid, profile=args.profile)


def cmd_mfdfa(args: argparse.Namespace) -> int:
    panel = read_panel(args.panel)
    cfg = _detrend_config(args, panel.dt, parse_q_values(args.q))
    report: Dict[str, Any] = {}
    for label in _panel_column(panel, args.column):
        grid = single_fluctuation(panel.frame[label].to_numpy(), cfg)
        h = generalized_hurst(grid)
        entry: Dict[str, Any] = {"hurst": h.as_dict()}
        try:
            entry["spectrum"] = singularity_spectrum(h, args.branch).as_dict()
        except DetrendCorrError as e:
            entry["spectrum"] = {"error": str(e)}
        report[label] = entry
        if args.grid_dir:
            Path(args.grid_dir).mkdir(parents=True, exist_ok=True)
            write_grid(grid, Path(args.grid_dir) / f"{label}.csv")
    _emit_json(report, args.output)
    return EXIT_OK


def cmd_corr(args: argparse.Namespace) -> int:
    panel = read_panel(args.panel)
    if args.sweep:
        q_values = parse_q_values(args.q)
        scales = parse_scale_grid(args.sweep, panel.dt)
        table = scale_sweep(panel, q_values, scales, _detrend_config(args, panel.dt, q_values), args.jobs)
        _emit_text(table.to_csv(index=False, lineterminator="\n", float_format="%.17g"), args.output)
        return EXIT_OK

    q = s = None
    if args.kind == "detrended":
        q_values = parse_q_values(args.q)
        if len(q_values) != 1:
            raise ConfigError("a single --q is required for one detrended matrix (use --sweep for several)")
        q = q_values[0]
        s = parse_scale(args.s, panel.dt)
    cfg = _detrend_config(args, panel.dt, (q,) if q is not None else (2.0,))
    m = build_matrix(panel, args.kind, q, s, cfg, args.jobs)
    require_defined(m, args.allow_flagged, hint=FLAGGED_HINT)
    if args.output in (None, "-"):
        raise ConfigError("corr needs -o FILE (the matrix is written with a JSON sidecar)")
    write_matrix(m, args.output)
    return EXIT_OK


def cmd_rmt(args: argparse.Namespace) -> int:
    m = require_defined(read_matrix(args.matrix), args.allow_flagged, hint=FLAGGED_HINT)
    panel = read_panel(args.panel) if args.panel else None
    if panel is not None:
        panel = panel.select(m.labels)
        T_pts = len(panel)
    elif args.T is not None:
        T_pts = args.T
    else:
        raise ConfigError("rmt needs --panel or --T for the Marchenko-Pastur law")
    law = mp_law(T_pts, m.size)
    spec = eigen_sym(m)
    report: Dict[str, Any] = {"raw": spectrum_report(spec, law), "v1": top_contributors(spec, 1, args.top)}
    if panel is not None:
        filtered = filter_market_mode(panel, spec.vector(1))
        cfg = DetrendConfig(m=args.order, q_grid=(m.q if m.q is not None else 2.0,))
        reduced_matrix = filtered_matrix(filtered, m.kind, m.q, m.s, cfg, args.jobs)
        require_defined(reduced_matrix, args.allow_flagged, hint=FLAGGED_HINT)
        reduced = eigen_sym(reduced_matrix, first_index=2)
        report["filtered"] = spectrum_report(reduced, law)
        report["v2_filtered"] = top_contributors(reduced, 2, args.top)
    _emit_json(report, args.output)
    return EXIT_OK


def cmd_mst(args: argparse.Namespace) -> int:
    m = require_defined(read_matrix(args.matrix), args.allow_flagged, hint=FLAGGED_HINT)
    d = distance_matrix(m)
    tree = mst(d)
    communities = louvain(tree)
    tree = tree.with_attributes(communities=communities.membership, modularity=communities.modularity)
    prefix = Path(args.prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_tree(tree, f"{prefix}_edges.csv", f"{prefix}_nodes.csv")
    if args.svg:
        plot_tree(tree, args.svg)
    dd = degrees(tree)
    summary: Dict[str, Any] = {"hub": hub_summary(tree), "modularity": communities.modularity, "degree_ccdf": dd.points}
    try:
        summary["degree_tail"] = degree_tail_fit(dd).as_dict()
    except DetrendCorrError as e:
        summary["degree_tail"] = {"error": str(e)}
    if args.full_graph:
        full = louvain_full_graph(d)
        summary["full_graph"] = {"membership": full.membership, "modularity": full.modularity}
    _emit_json(summary, args.output)
    return EXIT_OK


def _parse_params(pairs: Sequence[str]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise GeneratorParamError(f"generator parameter '{pair}' must be NAME=VALUE")
        name, value = pair.split("=", 1)
        try:
            params[name] = json.loads(value)
        except json.JSONDecodeError:
            params[name] = value
    return params


def cmd_synth(args: argparse.Namespace) -> int:
    spec = GeneratorSpec(args.kind, _parse_params(args.param), args.seed, args.T, args.I, parse_duration(args.dt))
    if spec.kind in TREE_KINDS:
        if args.output in (None, "-"):
            raise ConfigError("tree generators need -o PREFIX")
        write_tree(generate(spec), f"{args.output}_edges.csv", f"{args.output}_nodes.csv")
        return EXIT_OK
    panel = generate_panel(spec)
    if args.output in (None, "-"):
        write_panel(panel, sys.stdout)
    else:
        write_panel(panel, args.output)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_json(args.config)
    overrides: Dict[str, Any] = {
        "output_dir": args.output_dir or os.getenv(OUTPUT_DIR_ENV),
        "jobs": resolve_jobs(args.jobs, cfg.jobs),
        "seed": args.seed,
    }
    if args.no_render:
        overrides["render"] = False
    if args.allow_flagged:
        overrides["allow_flagged"] = True
    if args.full_graph:
        overrides["full_graph"] = True
    result = run_pipeline(cfg.with_overrides(**overrides))
    sys.stdout.write(f"{result.manifest_path}\n")
    return result.status


def cmd_render(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read manifest {manifest_path}: {e}") from e
    for figure in render_figures(manifest, manifest_path.parent):
        sys.stdout.write(f"{figure}\n")
    return EXIT_OK


def _add_window(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("ticks", help="Tick file or directory of *.csv tick files")
    parser.add_argument("--start", help="Window start, ISO-8601 (UTC when no offset)")
    parser.add_argument("--days", type=int, default=500, help="Window length in days (default: 500)")
    parser.add_argument("--supplies", help="CSV with collection_id,supply")
    parser.add_argument("--min-tx", type=float, default=2.0, help="Liquidity threshold in trades per day (default: 2)")


def _add_detrend(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--order", type=int, default=2, help="Detrending polynomial order (default: 2)")
    parser.add_argument("--profile", choices=["cumulative", "midpoint"], default="cumulative")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detrendcorr", description="Detrended cross-correlation analysis of collection markets")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (DEBUG)")
    parser.add_argument("-q", "--quiet", action="count", default=0, help="Less logging (WARNING)")
    parser.add_argument("--jobs", type=int, help="Worker cap (-1 for all cores; env DETRENDCORR_JOBS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="Parse tick files and summarise collections")
    _add_window(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("panel", help="Build an aligned panel of c or n")
    _add_window(p)
    p.add_argument("--observable", choices=["c", "n"], default="c")
    p.add_argument("--dt", default="24h", help="Bin width: 1h, 24h or seconds")
    p.add_argument("--collections", help="Comma-separated collection ids (default: liquid collections)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_panel)

    p = sub.add_parser("dist", help="Tail fits and autocorrelation of panel columns")
    p.add_argument("panel")
    p.add_argument("--column")
    p.add_argument("--law", choices=["powerlaw", "stretched"], default="powerlaw")
    p.add_argument("--x-min-pct", type=float, default=90.0)
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("mfdfa", help="Generalized Hurst exponents and singularity spectra")
    p.add_argument("panel")
    p.add_argument("--column")
    p.add_argument("--q", default="-4:4:0.5", help="q values, range lo:hi:step or list")
    p.add_argument("--scales", help="Scale grid, e.g. 10:1200:log20 or 7d,14d")
    p.add_argument("--branch", choices=["full", "left", "right"], default="full")
    p.add_argument("--grid-dir", help="Write each fluctuation grid as CSV into this directory")
    _add_detrend(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_mfdfa)

    p = sub.add_parser("corr", help="Pearson or detrended correlation matrix")
    p.add_argument("panel")
    p.add_argument("--kind", choices=["pearson", "detrended"], default="pearson")
    p.add_argument("--q", default="2")
    p.add_argument("--s", default="7d", help="Scale in bins or as a duration")
    p.add_argument("--sweep", help="Scale grid for a (q, s) sweep table instead of one matrix")
    p.add_argument("--allow-flagged", action="store_true", help="Keep undefined pairs as zeros instead of failing")
    _add_detrend(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("rmt", help="Eigenvalue spectrum against Marchenko-Pastur, with market-mode filtering")
    p.add_argument("matrix")
    p.add_argument("--panel", help="Panel the matrix was built from (enables filtering)")
    p.add_argument("--T", type=int, help="Series length when no panel is given")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--allow-flagged", action="store_true", help="Accept a matrix with undefined (zero-filled) pairs")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_rmt)

    p = sub.add_parser("mst", help="Minimal spanning tree, communities and degree statistics")
    p.add_argument("matrix")
    p.add_argument("prefix", help="Output prefix for <prefix>_edges.csv and <prefix>_nodes.csv")
    p.add_argument("--full-graph", action="store_true", help="Also run Louvain on the complete graph")
    p.add_argument("--svg", help="Also draw the tree into this SVG file")
    p.add_argument("--allow-flagged", action="store_true", help="Accept a matrix with undefined (zero-filled) pairs")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_mst)

    p = sub.add_parser("synth", help="Synthetic panels, series and trees")
    p.add_argument("kind")
    p.add_argument("--T", type=int, default=1024)
    p.add_argument("--I", type=int, default=1)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dt", default="24h")
    p.add_argument("--param", action="append", default=[], help="Generator parameter NAME=VALUE (repeatable)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="Full pipeline from a JSON run configuration")
    p.add_argument("config")
    p.add_argument("--output-dir", help="Overrides the config (env DETRENDCORR_OUTPUT_DIR)")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-render", action="store_true")
    p.add_argument("--allow-flagged", action="store_true")
    p.add_argument("--full-graph", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("render", help="Render SVG figures for a run manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point for the ``detrendcorr`` console script."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose - args.quiet)
    load_env_file(".env")

    try:
        if args.command != "run":
            args.jobs = resolve_jobs(args.jobs)
        return args.func(args)
    except (ConfigError, GeneratorParamError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except FileNotFoundError as e:
        logger.error("Input not found: %s", e.filename)
        return EXIT_USAGE
    except DetrendCorrError as e:
        logger.error("%s", e)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        logger.warning("Interrupted by user")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
