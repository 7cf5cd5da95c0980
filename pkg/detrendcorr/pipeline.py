"""End-to-end analysis run: ingest -> panel -> diststats -> mfdfa -> corrmat -> rmt -> mstnet.

Every file a run writes is registered with ``ArtifactWriter`` and listed,
with its SHA-256, in ``manifest.json``. A failing stage leaves its partial
artifacts in place and writes ``manifest.json.partial`` instead.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import __version__
from .config import HOUR, RunConfig, parse_q_values, parse_scale_grid
from .corrmat import CorrMatrix, build_matrix, offdiag_histogram, require_defined, sweep_row, write_matrix
from .diststats import AcfCurve, acf, acf_decay_exponent, ccdf, fit_powerlaw_tail, fit_stretched_exp, loglog_points, shuffled_surrogate
from .errors import (
    ConfigError,
    DegenerateDegreesError,
    DegenerateTailError,
    DetrendCorrError,
    InsufficientDataError,
    PipelineStageError,
    ZeroVarianceError,
)
from .figures import render_figures
from .ingest import (
    TickTable,
    collection_metadata,
    liquid_collections,
    liquidity_filter,
    load_ticks,
    metadata_frame,
    parse_supplies,
)
from .mfdfa import DetrendConfig, FluctuationGrid, generalized_hurst, single_fluctuation, singularity_spectrum, write_grid
from .mstnet import degree_tail_fit, degrees, distance_matrix, hub_summary, louvain, louvain_full_graph, mst, write_tree
from .rmt import eigen_sym, filter_market_mode, filtered_matrix, mp_law, spectrum_report, top_contributors, write_eigenvector
from .series import Observable, Panel, Series, activity_surges, build_panel, daily_pattern, write_panel
from .synthlab import GeneratorSpec, generate_panel

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
PARTIAL_SUFFIX = ".partial"
MIN_COLLECTIONS = 3
HIGHLIGHTED = 4


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy values, paths, enums and dates into JSON-native values.

    Non-finite floats become ``None``.
    """
    if isinstance(obj, dict):
        return {str(key): to_jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(item) for item in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (date, datetime)):
        return obj.isoformat()
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def dump_json(data: Any) -> str:
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n"


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ArtifactWriter:
    """Writes run artifacts below ``root`` and remembers their kind and stage."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.stage = "setup"
        self._records: Dict[str, Dict[str, str]] = {}

    def path(self, relpath: str) -> Path:
        target = self.root / relpath
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def register(self, relpath: str, kind: str) -> Path:
        self._records[relpath] = {"path": relpath, "kind": kind, "stage": self.stage}
        return self.root / relpath

    def json(self, relpath: str, data: Any, kind: str) -> Path:
        self.path(relpath).write_text(dump_json(data), encoding="utf-8")
        return self.register(relpath, kind)

    def frame(self, relpath: str, frame: pd.DataFrame, kind: str) -> Path:
        frame.to_csv(self.path(relpath), index=False, lineterminator="\n", float_format="%.17g")
        return self.register(relpath, kind)

    def written(self, relpath: str, kind: str, writer: Callable[[Path], None]) -> Path:
        writer(self.path(relpath))
        return self.register(relpath, kind)

    def artifacts(self) -> List[Dict[str, str]]:
        entries = []
        for relpath in sorted(self._records):
            entry = dict(self._records[relpath])
            entry["sha256"] = sha256_file(self.root / relpath)
            entries.append(entry)
        return entries

    def manifest(self, status: str = "complete", error: Optional[PipelineStageError] = None) -> Dict[str, Any]:
        manifest: Dict[str, Any] = {
            "tool": "detrendcorr",
            "version": __version__,
            "status": status,
            "artifacts": self.artifacts(),
        }
        if error is not None:
            manifest["failed_stage"] = error.stage
            manifest["error"] = str(error.cause)
        return manifest


@dataclass
class RunState:
    """Everything the stages hand to each other."""

    table: Optional[TickTable] = None
    supplies: Dict[str, int] = field(default_factory=dict)
    keep: List[str] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)
    liquid: List[str] = field(default_factory=list)
    hourly: Optional[Panel] = None
    panel: Optional[Panel] = None
    matrices: Dict[str, CorrMatrix] = field(default_factory=dict)

    def highlighted(self) -> List[str]:
        labels = self.panel.labels
        preferred = [label for label in self.liquid if label in labels]
        return (preferred or labels)[:HIGHLIGHTED]

    def node_sizes(self, labels: List[str], observable: str) -> Optional[np.ndarray]:
        if not self.meta:
            return None
        attribute = "capitalization_last_day" if observable == "c" else "n_total"
        sizes = [getattr(self.meta[label], attribute) for label in labels]
        return np.array([np.nan if v is None else float(v) for v in sizes])


@dataclass
class RunResult:
    status: int
    output_dir: Path
    manifest: Dict[str, Any]

    @property
    def manifest_path(self) -> Path:
        return self.output_dir / MANIFEST_NAME


def _generator_spec(cfg: RunConfig) -> GeneratorSpec:
    return GeneratorSpec.from_dict({"seed": cfg.seed, "dt": cfg.dt_seconds, **cfg.synthetic})


def _detrend_config(cfg: RunConfig, q_values) -> DetrendConfig:
    s_grid = parse_scale_grid(cfg.mfdfa_scales, cfg.dt_seconds) if cfg.mfdfa_scales else None
    return DetrendConfig(m=cfg.order, q_grid=tuple(q_values), s_grid=s_grid)


def preflight(cfg: RunConfig) -> None:
    """Resolve every derived setting so configuration errors surface before any stage runs."""
    cfg.validate()
    if cfg.synthetic is not None:
        _generator_spec(cfg)
    else:
        _ = cfg.window
        if not Path(cfg.ticks).exists():
            raise ConfigError(f"tick input {cfg.ticks} does not exist")
    _ = cfg.scale_bins
    _detrend_config(cfg, parse_q_values(cfg.mfdfa_q))


def _stage_ingest(cfg: RunConfig, state: RunState, out: ArtifactWriter, jobs: int) -> None:
    if cfg.synthetic is not None:
        spec = _generator_spec(cfg)
        state.panel = generate_panel(spec)
        out.json("ingest/generator.json", {"kind": spec.kind, "params": spec.params, "seed": spec.seed,
                                           "T_pts": spec.T_pts, "I": spec.I, "dt": spec.dt}, "generator")
        return

    table = load_ticks(cfg.ticks, cfg.window)
    state.table = table
    state.supplies = parse_supplies(cfg.supplies) if cfg.supplies else {}
    liquid = liquidity_filter(table, cfg.min_avg_tx_per_day)
    if cfg.collections:
        missing = sorted(set(cfg.collections) - set(table.collections))
        if missing:
            logger.warning("Requested collections without ticks: %s", missing)
        liquid &= set(cfg.collections)
    state.keep = sorted(liquid)
    if len(state.keep) < MIN_COLLECTIONS:
        raise InsufficientDataError(
            f"{len(state.keep)} collections pass the liquidity filter, at least {MIN_COLLECTIONS} are needed"
        )

    state.hourly = build_panel(table, "n", HOUR, collections=table.collections)
    meta = collection_metadata(table, state.supplies, state.hourly)
    state.meta = {m.collection_id: m for m in meta}
    state.liquid = [cid for cid in liquid_collections(meta) if cid in state.keep]
    out.frame("ingest/collections.csv", metadata_frame(meta), "collections")
    out.json(
        "ingest/summary.json",
        {
            "records": len(table),
            "dropped": table.dropped,
            "window": {"t_start": table.t_start, "duration_days": table.duration_days},
            "collections": len(table.collections),
            "kept": state.keep,
            "liquid": state.liquid,
        },
        "ingest_summary",
    )


def _stage_panel(cfg: RunConfig, state: RunState, out: ArtifactWriter, jobs: int) -> None:
    if state.table is not None:
        state.panel = build_panel(state.table, cfg.observable, cfg.dt_seconds, state.supplies, state.keep)
        totals = state.hourly.values.sum(axis=1)
        pattern = daily_pattern(Series(totals, HOUR, state.hourly.t0, Observable.TX_COUNT, "all"))
        out.frame("panel/daily_pattern.csv", pd.DataFrame({"hour": np.arange(24), "mean": pattern}), "daily_pattern")
        surges = activity_surges(state.hourly.select(state.keep))
        out.json("panel/surges.json", [{"t": t, "collections": labels} for t, labels in surges], "surges")

    panel = state.panel
    constant = [label for label, column in zip(panel.labels, panel.values.T) if np.ptp(column) == 0]
    if constant:
        logger.warning("Dropping %d constant columns: %s", len(constant), constant)
        panel = panel.select([label for label in panel.labels if label not in constant])
        state.panel = panel
    if panel.n_columns < MIN_COLLECTIONS:
        raise InsufficientDataError(f"panel has {panel.n_columns} usable columns, at least {MIN_COLLECTIONS} are needed")
    out.written("panel/panel.csv", "panel", lambda p: write_panel(panel, p))
    out.json("panel/summary.json", {"T": len(panel), "I": panel.n_columns, "dt": panel.dt,
                                    "observable": panel.observable, "dropped_constant": constant}, "panel_summary")


def _column_tails(label: str, values: np.ndarray, observable: str) -> Dict[str, Any]:
    try:
        if observable == "n":
            return fit_stretched_exp(values).as_dict()
        return fit_powerlaw_tail(np.abs(values)).as_dict()
    except (DegenerateTailError, ZeroVarianceError) as e:
        logger.debug("No tail fit for %s: %s", label, e)
        return {"error": str(e)}


def _mean_acf(columns: List[Series], max_lag: int) -> Optional[np.ndarray]:
    curves = []
    for column in columns:
        try:
            curves.append(acf(column, max_lag).values)
        except ZeroVarianceError:
            continue
    return np.mean(curves, axis=0) if curves else None


def _stage_diststats(cfg: RunConfig, state: RunState, out: ArtifactWriter, jobs: int) -> None:
    panel = state.panel
    fits = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_column_tails)(label, column, cfg.observable) for label, column in zip(panel.labels, panel.values.T)
    )

    pooled = np.concatenate([np.abs(c) / c.std(ddof=1) for c in panel.values.T])
    curve = ccdf(pooled)
    x, p = loglog_points(curve, float(curve.x[curve.x > 0][0]), max_points=200)
    out.frame("dist/ccdf.csv", pd.DataFrame({"label": "pooled", "x": x, "p": p}), "ccdf")

    max_lag = min(cfg.max_lag, len(panel) // 4 - 1)
    report: Dict[str, Any] = {"tails": dict(zip(panel.labels, fits)), "max_lag": max_lag}
    if max_lag >= 1:
        magnitudes = [s.with_values(np.abs(s.values)) for s in panel.columns()]
        shuffled = [shuffled_surrogate(s, cfg.seed + k) for k, s in enumerate(magnitudes)]
        memory = _mean_acf(magnitudes, max_lag)
        baseline = _mean_acf(shuffled, max_lag)
        if memory is not None and baseline is not None:
            lags = np.arange(1, max_lag + 1)
            out.frame("dist/acf.csv", pd.DataFrame({"lag": lags, "abs": memory, "shuffled": baseline}), "acf")
            try:
                kappa, stderr, r2 = acf_decay_exponent(AcfCurve(lags, memory, panel.dt))
                report["acf_decay"] = {"kappa": kappa, "stderr": stderr, "r2": r2}
            except InsufficientDataError as e:
                report["acf_decay"] = {"error": str(e)}
    out.json("dist/tails.json", report, "tails")


def _column_mfdfa(label: str, values: np.ndarray, dcfg: DetrendConfig) -> Tuple[str, Optional[FluctuationGrid], Dict[str, Any]]:
    try:
        grid = single_fluctuation(values, dcfg)
        h = generalized_hurst(grid)
    except DetrendCorrError as e:
        return label, None, {"error": str(e)}
    result: Dict[str, Any] = {"hurst": h.as_dict(), "spectrum": None}
    try:
        result["spectrum"] = singularity_spectrum(h).as_dict()
    except DetrendCorrError as e:
        logger.debug("No singularity spectrum for %s: %s", label, e)
    return label, grid, result


def _stage_mfdfa(cfg: RunConfig, state: RunState, out: ArtifactWriter, jobs: int) -> None:
    panel = state.panel
    dcfg = _detrend_config(cfg, parse_q_values(cfg.mfdfa_q))
    results = Parallel(n_jobs=jobs)(
        delayed(_column_mfdfa)(label, column, dcfg) for label, column in zip(panel.labels, panel.values.T)
    )
    highlighted = set(state.highlighted())
    rows, grids = [], []
    for label, grid, result in results:
        if grid is None:
            logger.warning("MFDFA failed for %s: %s", label, result["error"])
            rows.append({"label": label, "h2": np.nan, "h2_stderr": np.nan, "delta_alpha": np.nan})
            continue
        frame = grid.to_frame()
        frame.insert(0, "label", label)
        grids.append(frame)
        h = result["hurst"]
        h2 = dict(zip(h["q"], zip(h["h"], h["stderr"]))).get(2.0, (np.nan, np.nan))
        spectrum = result["spectrum"]
        width = float(np.ptp(spectrum["alpha"])) if spectrum else np.nan
        rows.append({"label": label, "h2": h2[0], "h2_stderr": h2[1], "delta_alpha": width})
        if label in highlighted:
            out.written(f"mfdfa/{label}_grid.csv", "fluctuation_grid", lambda p, g=grid: write_grid(g, p))
            out.json(f"mfdfa/{label}_hurst.json", result, "hurst")
    if grids:
        out.frame("mfdfa/grids.csv", pd.concat(grids, ignore_index=True), "fluctuation_table")
    out.frame("mfdfa/hurst.csv", pd.DataFrame(rows, columns=["label", "h2", "h2_stderr", "delta_alpha"]), "hurst_table")


def _check_flagged(m: CorrMatrix, cfg: RunConfig) -> None:
    require_defined(m, cfg.allow_flagged, hint="set allow_flagged")


def _stage_corrmat(cfg: RunConfig, state: RunState, out: ArtifactWriter, jobs: int) -> None:
    panel = state.panel
    dcfg = _detrend_config(cfg, cfg.q)
    requests: List[Tuple[str, Optional[float], Optional[int]]] = []
    if "pearson" in cfg.kinds:
        requests.append(("pearson", None, None))
    if "detrended" in cfg.kinds:
        requests.extend(("detrended", float(q), s) for q in cfg.q for s in cfg.scale_bins)

    sweep = []
    for kind, q, s in requests:
        m = build_matrix(panel, kind, q, s, dcfg, jobs)
        _check_flagged(m, cfg)
        name = m.name
        state.matrices[name] = m
        out.written(f"corr/{name}.csv", "matrix", lambda p, m=m: write_matrix(m, p))
        out.register(f"corr/{name}.json", "matrix_metadata")
        out.json(f"corr/{name}_hist.json", offdiag_histogram(m, cfg.hist_bins).as_dict(), "offdiag_histogram")
        if kind == "detrended":
            sweep.append(sweep_row(m))
    if sweep:
        out.frame("corr/scale_sweep.csv", pd.DataFrame(sweep, columns=["q", "s", "mean_offdiag", "lambda1", "flagged"]), "scale_sweep")


def _stage_rmt(cfg: RunConfig, state: RunState, out: ArtifactWriter, jobs: int) -> None:
    panel = state.panel
    law = mp_law(len(panel), panel.n_columns)
    dcfg = _detrend_config(cfg, cfg.q)
    for name, m in state.matrices.items():
        spec = eigen_sym(m)
        out.json(f"rmt/{name}_spectrum.json", spectrum_report(spec, law), "spectrum")
        for index in (1, 2):
            out.written(f"rmt/{name}_v{index}.csv", "eigenvector", lambda p, i=index: write_eigenvector(spec, i, p))

        filtered = filter_market_mode(panel, spec.vector(1))
        reduced = filtered_matrix(filtered, m.kind, m.q, m.s, dcfg, jobs)
        _check_flagged(reduced, cfg)
        reduced_spec = eigen_sym(reduced, first_index=2)
        out.json(f"rmt/{name}_filtered_spectrum.json", spectrum_report(reduced_spec, law), "spectrum")
        out.written(f"rmt/{name}_filtered_v2.csv", "eigenvector", lambda p: write_eigenvector(reduced_spec, 2, p))
        regression = pd.DataFrame(
            {"label": filtered.residuals.labels, "intercept": filtered.intercepts, "slope": filtered.slopes}
        )
        out.frame(f"rmt/{name}_regression.csv", regression, "market_regression")
        out.json(
            f"rmt/{name}_contributors.json",
            {
                "v1": top_contributors(spec, 1),
                "v2": top_contributors(spec, 2),
                "v2_filtered": top_contributors(reduced_spec, 2),
            },
            "contributors",
        )
        logger.info(
            "%s: lambda1 = %.3f (lambda+ = %.3f), %.3f after filtering",
            name, spec.value(1), law.lambda_plus, reduced_spec.value(2),
        )


def _stage_mstnet(cfg: RunConfig, state: RunState, out: ArtifactWriter, jobs: int) -> None:
    for name, m in state.matrices.items():
        d = distance_matrix(m)
        tree = mst(d)
        communities = louvain(tree)
        tree = tree.with_attributes(
            sizes=state.node_sizes(tree.labels, cfg.observable),
            communities=communities.membership,
            modularity=communities.modularity,
        )
        out.written(f"mst/{name}_edges.csv", "tree_edges", lambda p, t=tree: write_tree(t, p, p.with_name(f"{name}_nodes.csv")))
        out.register(f"mst/{name}_nodes.csv", "tree_nodes")

        dd = degrees(tree)
        summary: Dict[str, Any] = {
            "hub": hub_summary(tree),
            "total_distance": tree.total_weight,
            "modularity": communities.modularity,
            "n_communities": max(communities.membership) + 1,
            "degree_ccdf": dd.points,
        }
        try:
            summary["degree_tail"] = degree_tail_fit(dd).as_dict()
        except DegenerateDegreesError as e:
            summary["degree_tail"] = {"error": str(e)}
        if cfg.full_graph:
            full = louvain_full_graph(d)
            summary["full_graph"] = {"membership": full.membership, "modularity": full.modularity}
        out.json(f"mst/{name}_summary.json", summary, "tree_summary")


def _stage_render(cfg: RunConfig, state: RunState, out: ArtifactWriter, jobs: int) -> None:
    for figure in render_figures(out.manifest(status="rendering"), out.root):
        out.register(figure.relative_to(out.root).as_posix(), "figure")


STAGES: List[Tuple[str, Callable[[RunConfig, RunState, ArtifactWriter, int], None]]] = [
    ("ingest", _stage_ingest),
    ("panel", _stage_panel),
    ("diststats", _stage_diststats),
    ("mfdfa", _stage_mfdfa),
    ("corrmat", _stage_corrmat),
    ("rmt", _stage_rmt),
    ("mstnet", _stage_mstnet),
    ("render", _stage_render),
]


def run_pipeline(cfg: RunConfig) -> RunResult:
    """Run every stage for ``cfg`` and write the manifest.

    Raises ``ConfigError``/``GeneratorParamError`` before any stage runs and
    ``PipelineStageError`` (naming the stage) when a stage fails.
    """
    preflight(cfg)
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    for stale in (root / MANIFEST_NAME, root / (MANIFEST_NAME + PARTIAL_SUFFIX)):
        stale.unlink(missing_ok=True)

    out = ArtifactWriter(root)
    out.stage = "setup"
    cfg.to_json(out.path("config.json"))
    out.register("config.json", "config")

    state = RunState()
    for stage, run_stage in STAGES:
        if stage == "render" and not cfg.render:
            continue
        out.stage = stage
        logger.info("Stage %s", stage)
        try:
            run_stage(cfg, state, out, cfg.jobs)
        except Exception as e:
            error = PipelineStageError(stage, e)
            partial = root / (MANIFEST_NAME + PARTIAL_SUFFIX)
            partial.write_text(dump_json(out.manifest("failed", error)), encoding="utf-8")
            logger.error("Stage %s failed: %s (partial manifest at %s)", stage, e, partial)
            raise error from e

    manifest = out.manifest()
    (root / MANIFEST_NAME).write_text(dump_json(manifest), encoding="utf-8")
    logger.info("Run complete: %d artifacts in %s", len(manifest["artifacts"]), root)
    return RunResult(0, root, manifest)
