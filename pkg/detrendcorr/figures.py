"""SVG figures for every analysis artifact.

Figures are built on bare ``matplotlib.figure.Figure`` objects (no pyplot
state) and saved with a fixed SVG hash salt and no date, so identical data
produce byte-identical files.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import matplotlib
import networkx as nx
import numpy as np
import pandas as pd
from matplotlib.figure import Figure
from matplotlib.lines import Line2D
from matplotlib.patches import Circle

from .corrmat import OffdiagHistogram
from .diststats import AcfCurve, CcdfCurve
from .mfdfa import FluctuationGrid, HurstResult, SingularitySpectrum, read_grid
from .mstnet import Tree, read_tree
from .rmt import MpLaw

logger = logging.getLogger(__name__)

SVG_RC = {"svg.hashsalt": "detrendcorr", "svg.fonttype": "path", "font.size": 9}
LAYOUT_SEED = 7
PathLike = Union[str, Path]


def save_svg(fig: Figure, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _figure(width: float = 5.0, height: float = 3.6) -> Figure:
    with matplotlib.rc_context(SVG_RC):
        return Figure(figsize=(width, height), layout="constrained")


def plot_fluctuations(grid: FluctuationGrid, path: Optional[PathLike] = None, q_values: Optional[Sequence[float]] = None) -> Figure:
    """|F_norm(q, s)| against s on log-log axes, one line per q."""
    fig = _figure()
    ax = fig.add_subplot()
    q_values = grid.q if q_values is None else q_values
    for q in q_values:
        qi = int(np.argmin(np.abs(grid.q - q)))
        ok = grid.valid[qi] & (np.abs(grid.F_norm[qi]) > 0)
        ax.plot(grid.s[ok], np.abs(grid.F_norm[qi, ok]), marker="o", markersize=2, linewidth=0.8, label=f"q={grid.q[qi]:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("s")
    ax.set_ylabel("F(q, s)")
    ax.set_title(grid.kind)
    if len(q_values) <= 8:
        ax.legend(fontsize=6)
    if path is not None:
        save_svg(fig, path)
    return fig


def plot_hurst(h: HurstResult, spectrum: Optional[SingularitySpectrum] = None, path: Optional[PathLike] = None) -> Figure:
    fig = _figure(7.0, 3.2)
    ax_h, ax_f = fig.subplots(1, 2)
    ax_h.errorbar(h.q, h.h, yerr=h.stderr, marker="o", markersize=3, linewidth=0.8)
    ax_h.set_xlabel("q")
    ax_h.set_ylabel("h(q)")
    if spectrum is not None:
        ax_f.plot(spectrum.alpha, spectrum.f, marker="o", markersize=3, linewidth=0.8)
    ax_f.set_xlabel("alpha")
    ax_f.set_ylabel("f(alpha)")
    if path is not None:
        save_svg(fig, path)
    return fig


def plot_ccdf(curves: Mapping[str, CcdfCurve], path: Optional[PathLike] = None) -> Figure:
    fig = _figure()
    ax = fig.add_subplot()
    for label, curve in curves.items():
        keep = curve.x > 0
        ax.step(curve.x[keep], curve.p[keep], where="post", linewidth=0.8, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("x / sigma")
    ax.set_ylabel("P(X > x)")
    ax.legend(fontsize=6)
    if path is not None:
        save_svg(fig, path)
    return fig


def plot_acf(curves: Mapping[str, AcfCurve], path: Optional[PathLike] = None) -> Figure:
    fig = _figure()
    ax = fig.add_subplot()
    for label, curve in curves.items():
        ax.plot(curve.lags, curve.values, linewidth=0.8, label=label)
    ax.axhline(0.0, color="gray", linewidth=0.5)
    ax.set_xscale("log")
    ax.set_xlabel("lag")
    ax.set_ylabel("A(lag)")
    ax.legend(fontsize=6)
    if path is not None:
        save_svg(fig, path)
    return fig


def plot_daily_pattern(pattern: np.ndarray, path: Optional[PathLike] = None) -> Figure:
    fig = _figure()
    ax = fig.add_subplot()
    ax.bar(np.arange(24), pattern, width=0.8)
    ax.set_xlabel("hour (UTC)")
    ax.set_ylabel("mean transactions")
    ax.set_xticks(range(0, 24, 3))
    if path is not None:
        save_svg(fig, path)
    return fig


def plot_eigenvalues(eigenvalues: np.ndarray, law: MpLaw, path: Optional[PathLike] = None, bins: int = 40) -> Figure:
    """Eigenvalue histogram with the Marchenko-Pastur density over [lambda-, lambda+]."""
    fig = _figure()
    ax = fig.add_subplot()
    ax.hist(eigenvalues, bins=bins, density=True, color="lightsteelblue", edgecolor="steelblue", linewidth=0.4)
    lo, hi = law.bounds
    grid = np.linspace(lo, hi, 400)
    (curve,) = ax.plot(grid, law.density(grid), color="crimson", linewidth=1.0)
    curve.set_gid("mp-curve")
    ax.set_xlabel("lambda")
    ax.set_ylabel("density")
    if path is not None:
        save_svg(fig, path)
    return fig


def plot_offdiag(hist: OffdiagHistogram, path: Optional[PathLike] = None) -> Figure:
    fig = _figure()
    ax = fig.add_subplot()
    widths = np.diff(hist.edges)
    density = hist.counts / (hist.n * widths)
    ax.bar(hist.edges[:-1], density, width=widths, align="edge", color="lightgray", edgecolor="gray", linewidth=0.4)
    x = np.linspace(hist.edges[0], hist.edges[-1], 300)
    ax.plot(x, hist.fitted_density(x), linestyle="--", color="black", linewidth=0.8)
    ax.set_xlabel("off-diagonal entry")
    ax.set_ylabel("density")
    if path is not None:
        save_svg(fig, path)
    return fig


def plot_tree(tree: Tree, path: Optional[PathLike] = None, seed: int = LAYOUT_SEED) -> Figure:
    """Force-directed tree drawing: one circle per node, one line per edge.

    Node radius grows with the square root of the size attribute, edge width
    with the correlation 2 - d, and colour follows the community.
    """
    layout = nx.spring_layout(tree.to_graph(), seed=seed, weight="weight")
    coords = np.array([layout[i] for i in range(tree.size)])
    fig = _figure(6.0, 6.0)
    ax = fig.add_subplot()
    for i, j, d in tree.edges:
        line = Line2D(
            [coords[i, 0], coords[j, 0]], [coords[i, 1], coords[j, 1]],
            linewidth=0.4 + 1.6 * max(0.0, 1.0 - d / 2.0), color="gray", zorder=1,
        )
        line.set_gid(f"edge-{i}-{j}")
        ax.add_line(line)

    sizes = np.ones(tree.size) if tree.sizes is None else np.nan_to_num(tree.sizes, nan=0.0)
    radii = 0.012 + 0.05 * np.sqrt(sizes / sizes.max()) if sizes.max() > 0 else np.full(tree.size, 0.02)
    colours = matplotlib.colormaps["tab20"]
    for i in range(tree.size):
        community = tree.communities[i] if tree.communities is not None else 0
        node = Circle(coords[i], radii[i], facecolor=colours(community % 20), edgecolor="black", linewidth=0.3, zorder=2)
        node.set_gid(f"node-{i}")
        ax.add_patch(node)
    pad = 0.1
    ax.set_xlim(coords[:, 0].min() - pad, coords[:, 0].max() + pad)
    ax.set_ylim(coords[:, 1].min() - pad, coords[:, 1].max() + pad)
    ax.set_aspect("equal")
    ax.set_axis_off()
    if path is not None:
        save_svg(fig, path)
    return fig


def _stem(relpath: str, suffix: str = "") -> str:
    name = Path(relpath).stem
    return name[: -len(suffix)] if suffix and name.endswith(suffix) else name


def _render_one(kind: str, source: Path, figures_dir: Path, relpath: str, artifacts: Dict[str, Dict]) -> Optional[Path]:
    if kind == "fluctuation_grid":
        return save_svg(plot_fluctuations(read_grid(source), q_values=[-4.0, -2.0, 2.0, 4.0]), figures_dir / f"fluct_{_stem(relpath)}.svg")
    if kind == "hurst":
        data = json.loads(source.read_text(encoding="utf-8"))
        h = HurstResult(
            np.array(data["hurst"]["q"]), np.array(data["hurst"]["h"]), np.array(data["hurst"]["stderr"]),
            np.array(data["hurst"]["r2"]), tuple(data["hurst"]["scaling_range"]),
        )
        spec = None
        if data.get("spectrum"):
            sp = data["spectrum"]
            spec = SingularitySpectrum(np.array(sp["q"]), np.array(sp["alpha"]), np.array(sp["f"]), sp["folded"])
        return save_svg(plot_hurst(h, spec), figures_dir / f"hurst_{_stem(relpath)}.svg")
    if kind == "ccdf":
        frame = pd.read_csv(source)
        curves = {}
        for label, group in frame.groupby("label", sort=True):
            x, p = group["x"].to_numpy(), group["p"].to_numpy()
            curves[str(label)] = CcdfCurve(x, p, 1.0, True, x)
        return save_svg(plot_ccdf(curves), figures_dir / f"{_stem(relpath)}.svg")
    if kind == "acf":
        frame = pd.read_csv(source)
        lags = frame["lag"].to_numpy()
        curves = {c: AcfCurve(lags, frame[c].to_numpy()) for c in frame.columns if c != "lag"}
        return save_svg(plot_acf(curves), figures_dir / f"{_stem(relpath)}.svg")
    if kind == "daily_pattern":
        frame = pd.read_csv(source)
        return save_svg(plot_daily_pattern(frame["mean"].to_numpy()), figures_dir / "daily_pattern.svg")
    if kind == "spectrum":
        report = json.loads(source.read_text(encoding="utf-8"))
        law = MpLaw(report["Q"])
        return save_svg(plot_eigenvalues(np.array(report["eigenvalues"]), law), figures_dir / f"eigen_{_stem(relpath)}.svg")
    if kind == "offdiag_histogram":
        data = json.loads(source.read_text(encoding="utf-8"))
        hist = OffdiagHistogram(np.array(data["edges"]), np.array(data["counts"]), data["mu"], data["sigma"], data["n"])
        return save_svg(plot_offdiag(hist), figures_dir / f"{_stem(relpath)}.svg")
    if kind == "tree_edges":
        nodes_rel = relpath.replace("_edges.csv", "_nodes.csv")
        if nodes_rel not in artifacts:
            logger.warning("Tree %s has no node table; skipping", relpath)
            return None
        tree = read_tree(source, source.parent / Path(nodes_rel).name)
        return save_svg(plot_tree(tree), figures_dir / f"mst_{_stem(relpath, '_edges')}.svg")
    return None


def render_figures(manifest: Mapping, out_dir: PathLike) -> List[Path]:
    """Render an SVG for every renderable artifact listed in the manifest.

    Artifacts missing on disk are skipped with a warning.
    """
    out_dir = Path(out_dir)
    figures_dir = out_dir / "figures"
    artifacts = {a["path"]: a for a in manifest.get("artifacts", [])}
    written: List[Path] = []
    for relpath in sorted(artifacts):
        kind = artifacts[relpath].get("kind", "")
        source = out_dir / relpath
        if not source.exists():
            logger.warning("Artifact %s is missing; skipping its figure", relpath)
            continue
        figure = _render_one(kind, source, figures_dir, relpath, artifacts)
        if figure is not None:
            written.append(figure)
    logger.info("Rendered %d figures into %s", len(written), figures_dir)
    return written
