"""MCP tool server - exposes every public AnalysisToolkit method as an MCP tool."""

import asyncio
import inspect
import json
import logging
import os
import types
import typing
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from mcp.server import Server
from mcp.server.models import InitializationOptions
from mcp.server.stdio import stdio_server
from mcp.types import ServerCapabilities, TextContent, Tool

from . import __version__
from .config import OUTPUT_DIR_ENV, RunConfig, configure_logging, load_env_file, parse_instant, parse_scale, resolve_jobs
from .corrmat import build_matrix, read_matrix, require_defined, rho_q, write_matrix
from .ingest import collection_metadata, liquidity_filter, load_ticks, metadata_frame
from .mfdfa import DEFAULT_Q_GRID, DetrendConfig, generalized_hurst, single_fluctuation, singularity_spectrum
from .mstnet import distance_matrix, hub_summary, louvain, mst
from .pipeline import run_pipeline as _run_pipeline
from .pipeline import to_jsonable
from .rmt import eigen_sym, mp_law, spectrum_report as _spectrum_report, top_contributors
from .series import HOURLY, build_panel, read_panel, write_panel
from .synthlab import TREE_KINDS, GeneratorSpec, generate, generate_panel

logger = logging.getLogger(__name__)

SERVER_NAME = "detrendcorr"
DEFAULT_OUTPUT_DIR = "detrendcorr-out"

_JSON_TYPES = {int: "integer", float: "number", bool: "boolean", str: "string", list: "array", dict: "object"}


def _json_type(annotation: Any) -> str:
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):
        members = [a for a in typing.get_args(annotation) if a is not type(None)]
        return _json_type(members[0]) if len(members) == 1 else "string"
    if origin is not None:
        annotation = origin
    return _JSON_TYPES.get(annotation, "string")


def get_method_schema(method) -> Dict[str, Any]:
    """Generate JSON schema for a method's parameters."""
    sig = inspect.signature(method)
    properties = {}
    required = []

    for name, param in sig.parameters.items():
        if name == "self":
            continue

        prop: Dict[str, Any] = {"type": "string"}
        if param.annotation is not inspect.Parameter.empty:
            prop["type"] = _json_type(param.annotation)
        if prop["type"] == "array":
            prop["items"] = {"type": "number"}

        if name == "kind" and method.__name__ == "correlation_matrix":
            prop["enum"] = ["pearson", "detrended"]
        if name == "start":
            prop["description"] = "Window start as ISO-8601 (UTC when no offset is given)"
        elif name.endswith("_path"):
            prop["description"] = f"Path to the {name[:-5].replace('_', ' ')} file"
        else:
            prop["description"] = name.replace("_", " ").title()

        properties[name] = prop
        if param.default is inspect.Parameter.empty:
            required.append(name)

    return {
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": False,
    }


class AnalysisToolkit:
    """Analysis operations with JSON-friendly arguments and results.

    Files produced by a tool are written below ``output_dir`` and returned as
    paths.
    """

    def __init__(self, output_dir: Optional[str] = None, jobs: int = 1):
        self.output_dir = Path(output_dir or DEFAULT_OUTPUT_DIR)
        self.jobs = jobs

    def _target(self, *parts: str) -> Path:
        path = self.output_dir.joinpath(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def synthesize(self, kind: str, T_pts: int = 1024, I: int = 1, seed: int = 42, params: Optional[dict] = None) -> Dict[str, Any]:
        """Generate a seeded synthetic panel (or tree) and write it as CSV."""
        spec = GeneratorSpec(kind, dict(params or {}), seed, T_pts, I)
        if kind in TREE_KINDS:
            tree = generate(spec)
            return {"kind": kind, "I": tree.size, "edges": [[tree.labels[i], tree.labels[j]] for i, j, _ in tree.edges]}
        panel = generate_panel(spec)
        path = self._target("synth", f"{kind}_seed{seed}.csv")
        write_panel(panel, path)
        values = panel.values
        return {
            "kind": kind,
            "path": str(path),
            "T": len(panel),
            "I": panel.n_columns,
            "mean": values.mean(axis=0),
            "std": values.std(axis=0, ddof=1),
        }

    def summarize_ticks(self, ticks_path: str, start: str, days: int = 500, min_avg_tx_per_day: float = 2.0) -> Dict[str, Any]:
        """Parse tick files and summarise every collection in the window."""
        table = load_ticks(ticks_path, (parse_instant(start), days))
        hourly = build_panel(table, "n", HOURLY, collections=table.collections)
        meta = metadata_frame(collection_metadata(table, {}, hourly))
        return {
            "records": len(table),
            "dropped": table.dropped,
            "liquid": sorted(liquidity_filter(table, min_avg_tx_per_day)),
            "collections": meta.drop(columns=["capitalization_last_day", "supply"]).to_dict(orient="records"),
        }

    def estimate_hurst(self, values: list, q_values: Optional[list] = None, order: int = 2) -> Dict[str, Any]:
        """Generalized Hurst exponents h(q) and the singularity spectrum of one series."""
        cfg = DetrendConfig(m=order, q_grid=tuple(q_values) if q_values else DEFAULT_Q_GRID)
        h = generalized_hurst(single_fluctuation(np.asarray(values, dtype=float), cfg))
        result: Dict[str, Any] = {"hurst": h.as_dict()}
        if len(h.q) >= 5:
            result["spectrum"] = singularity_spectrum(h).as_dict()
        return result

    def detrended_coefficient(self, x: list, y: list, q: float, s: int, order: int = 2) -> Dict[str, Any]:
        """q-dependent detrended cross-correlation coefficient of two series at scale s (bins)."""
        rho = rho_q(np.asarray(x, dtype=float), np.asarray(y, dtype=float), q, s, DetrendConfig(m=order))
        return {"q": q, "s": s, "rho": rho}

    def correlation_matrix(
        self,
        panel_path: str,
        kind: str = "pearson",
        q: Optional[float] = None,
        s: Optional[str] = None,
        order: int = 2,
        allow_flagged: bool = False,
    ) -> Dict[str, Any]:
        """Build a Pearson or detrended correlation matrix from a panel CSV."""
        panel = read_panel(panel_path)
        scale = parse_scale(s, panel.dt) if s is not None else None
        m = require_defined(build_matrix(panel, kind, q, scale, DetrendConfig(m=order), self.jobs), allow_flagged)
        path = self._target("corr", f"{Path(panel_path).stem}_{m.name}.csv")
        write_matrix(m, path)
        return {
            "path": str(path),
            "size": m.size,
            "mean_offdiag": float(m.offdiag().mean()) if m.size > 1 else None,
            "flagged_pairs": m.flagged_pairs,
        }

    def spectrum_report(self, matrix_path: str, T_pts: int, allow_flagged: bool = False) -> Dict[str, Any]:
        """Eigenvalues of a correlation matrix against the Marchenko-Pastur bounds."""
        m = require_defined(read_matrix(matrix_path), allow_flagged)
        spec = eigen_sym(m)
        report = _spectrum_report(spec, mp_law(T_pts, m.size))
        report["v1"] = top_contributors(spec, 1)
        return report

    def spanning_tree(self, matrix_path: str, allow_flagged: bool = False) -> Dict[str, Any]:
        """Minimal spanning tree, Louvain communities and the largest hub of a correlation matrix."""
        m = require_defined(read_matrix(matrix_path), allow_flagged)
        tree = mst(distance_matrix(m))
        communities = louvain(tree)
        return {
            "edges": [[tree.labels[i], tree.labels[j], d] for i, j, d in tree.edges],
            "total_distance": tree.total_weight,
            "communities": dict(zip(tree.labels, communities.membership)),
            "modularity": communities.modularity,
            "hub": hub_summary(tree),
        }

    def run_pipeline(self, config_path: str) -> Dict[str, Any]:
        """Run the full analysis pipeline from a JSON run configuration."""
        cfg = RunConfig.from_json(config_path)
        result = _run_pipeline(cfg.with_overrides(jobs=resolve_jobs(None, cfg.jobs)))
        return {
            "status": result.status,
            "manifest": str(result.manifest_path),
            "artifacts": len(result.manifest["artifacts"]),
        }


# Initialize the MCP server
server = Server(SERVER_NAME)
toolkit: Optional[AnalysisToolkit] = None


def initialize_toolkit() -> AnalysisToolkit:
    """Create the toolkit from DETRENDCORR_OUTPUT_DIR and DETRENDCORR_JOBS."""
    global toolkit
    toolkit = AnalysisToolkit(os.getenv(OUTPUT_DIR_ENV), resolve_jobs())
    logger.info("Toolkit writes artifacts to %s with %d jobs", toolkit.output_dir, toolkit.jobs)
    return toolkit


def public_methods() -> List[str]:
    return sorted(
        name for name, member in inspect.getmembers(AnalysisToolkit, inspect.isfunction) if not name.startswith("_")
    )


@server.list_tools()
async def list_tools() -> List[Tool]:
    """Dynamically generate tools from all public AnalysisToolkit methods."""
    if toolkit is None:
        initialize_toolkit()

    tools = []
    for method_name in public_methods():
        method = getattr(AnalysisToolkit, method_name)
        docstring = inspect.getdoc(method) or f"Execute {method_name.replace('_', ' ')}"
        tools.append(
            Tool(
                name=method_name,
                description=docstring.split("\n")[0],
                inputSchema=get_method_schema(method),
            )
        )
    return tools


@server.call_tool()
async def call_tool(name: str, arguments: Dict[str, Any]) -> List[TextContent]:
    """Dynamically execute any AnalysisToolkit method."""
    if toolkit is None:
        return [TextContent(type="text", text="Error: analysis toolkit not initialized")]

    try:
        if name not in public_methods():
            return [TextContent(type="text", text=f"Error: Method '{name}' not found")]

        method = getattr(toolkit, name)
        if asyncio.iscoroutinefunction(method):
            result = await method(**arguments)
        else:
            # analyses are CPU-bound; keep the stdio loop responsive
            result = await asyncio.to_thread(method, **arguments)

        return [TextContent(type="text", text=json.dumps(to_jsonable(result), indent=2))]

    except Exception as e:
        logger.debug("Tool %s failed", name, exc_info=True)
        return [TextContent(type="text", text=f"Error executing {name}: {str(e)}")]


async def main():
    """Main entry point for the server."""
    load_env_file(Path.cwd() / ".env")
    try:
        initialize_toolkit()
    except Exception as e:
        logger.error("Failed to initialize analysis toolkit: %s", e)
        return

    async with stdio_server() as (read_stream, write_stream):
        await server.run(
            read_stream,
            write_stream,
            InitializationOptions(
                server_name=SERVER_NAME,
                server_version=__version__,
                capabilities=ServerCapabilities(tools={}),
            ),
        )


def run():
    """Entry point for the MCP server"""
    configure_logging()
    asyncio.run(main())


if __name__ == "__main__":
    run()
