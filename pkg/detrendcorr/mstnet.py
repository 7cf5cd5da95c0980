"""Correlation networks: metric distances, minimal spanning trees, communities, degree statistics."""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
from networkx.algorithms.community import modularity as nx_modularity
from networkx.utils import UnionFind
from scipy.stats import linregress

from .errors import DegenerateDegreesError, DomainError, InsufficientDataError

if TYPE_CHECKING:
    from .corrmat import CorrMatrix
    from .diststats import TailFit

logger = logging.getLogger(__name__)

Edge = Tuple[int, int, float]

# a move must beat staying put by more than this to be taken
GAIN_TOL = 1e-12


@dataclass(frozen=True)
class DistanceMatrix:
    entries: np.ndarray
    labels: List[str]
    source: Dict[str, object] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.labels)


def distance_matrix(c: "CorrMatrix") -> DistanceMatrix:
    """d_ij = sqrt(2 (1 - rho_ij)) on the [-1, 1]-clamped matrix."""
    rho = c.clamped().entries
    d = np.sqrt(np.clip(2.0 * (1.0 - rho), 0.0, None))
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d, list(c.labels), c.metadata())


@dataclass(frozen=True)
class Tree:
    """Spanning tree on ``labels``; edges are (i, j, distance) with i < j."""

    labels: List[str]
    edges: List[Edge]
    sizes: Optional[np.ndarray] = None
    communities: Optional[List[int]] = None
    modularity: Optional[float] = None

    def __post_init__(self):
        n = len(self.labels)
        if len(self.edges) != n - 1:
            raise DomainError(f"a tree on {n} nodes needs {n - 1} edges, got {len(self.edges)}")
        components = UnionFind(range(n))
        for i, j, _ in self.edges:
            if components[i] == components[j]:
                raise DomainError(f"edge ({i}, {j}) closes a cycle")
            components.union(i, j)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def total_weight(self) -> float:
        return float(sum(d for _, _, d in self.edges))

    def edge_set(self) -> set:
        return {(i, j) for i, j, _ in self.edges}

    def degree_array(self) -> np.ndarray:
        degrees = np.zeros(self.size, dtype=np.int64)
        for i, j, _ in self.edges:
            degrees[i] += 1
            degrees[j] += 1
        return degrees

    def to_graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.size))
        for i, j, d in self.edges:
            graph.add_edge(i, j, distance=d, weight=2.0 - d)
        return graph

    def with_attributes(
        self,
        sizes: Optional[np.ndarray] = None,
        communities: Optional[List[int]] = None,
        modularity: Optional[float] = None,
    ) -> "Tree":
        return replace(
            self,
            sizes=self.sizes if sizes is None else np.asarray(sizes, dtype=float),
            communities=self.communities if communities is None else list(communities),
            modularity=self.modularity if modularity is None else modularity,
        )


def mst(d: DistanceMatrix) -> Tree:
    """Kruskal with union-find; ties broken by (d, min(i, j), max(i, j))."""
    n = d.size
    if n < 2:
        raise InsufficientDataError(f"a spanning tree needs at least 2 nodes, got {n}")
    rows, cols = np.triu_indices(n, k=1)
    weights = d.entries[rows, cols]
    order = np.lexsort((cols, rows, weights))
    components = UnionFind(range(n))
    edges: List[Edge] = []
    for k in order:
        i, j = int(rows[k]), int(cols[k])
        if components[i] != components[j]:
            components.union(i, j)
            edges.append((i, j, float(weights[k])))
            if len(edges) == n - 1:
                break
    return Tree(list(d.labels), edges)


@dataclass(frozen=True)
class DegreeDistribution:
    degrees: np.ndarray
    values: np.ndarray
    ccdf: np.ndarray

    @classmethod
    def from_degrees(cls, degrees: Sequence[int]) -> "DegreeDistribution":
        degrees = np.asarray(degrees, dtype=np.int64)
        values, counts = np.unique(degrees, return_counts=True)
        at_or_above = len(degrees) - np.concatenate([[0], np.cumsum(counts)[:-1]])
        return cls(degrees, values, at_or_above / len(degrees))

    @property
    def points(self) -> List[Tuple[int, float]]:
        return list(zip(self.values.tolist(), self.ccdf.tolist()))


def degrees(t: Tree) -> DegreeDistribution:
    return DegreeDistribution.from_degrees(t.degree_array())


def degree_tail_fit(dd: DegreeDistribution) -> "TailFit":
    """Log-log least-squares slope of the degree CCDF P(X >= delta)."""
    from .diststats import TailFit

    if len(dd.values) < 4:
        raise DegenerateDegreesError(f"need at least 4 distinct degrees, got {len(dd.values)}")
    fit = linregress(np.log(dd.values), np.log(dd.ccdf))
    return TailFit(
        "power_law",
        -float(fit.slope),
        float(dd.values[0]),
        len(dd.degrees),
        float(fit.stderr),
        float(fit.slope),
        float(fit.rvalue**2),
    )


class CommunityAssignment(NamedTuple):
    membership: List[int]
    modularity: float


def _local_moves(adjacency: np.ndarray) -> Tuple[np.ndarray, bool]:
    """One Louvain level: sweep nodes in index order, moving each to the first improving neighbouring community.

    Candidate communities are tried in ascending id; a node moves to the
    first one whose gain beats staying by more than ``GAIN_TOL``.
    """
    n = len(adjacency)
    strength = adjacency.sum(axis=1)
    m2 = strength.sum()
    membership = np.arange(n)
    totals = strength.copy()
    moved_any = False
    improved = True
    while improved:
        improved = False
        for i in range(n):
            own = membership[i]
            totals[own] -= strength[i]
            neighbours = np.flatnonzero(adjacency[i] > 0)
            neighbours = neighbours[neighbours != i]
            links: Dict[int, float] = {}
            for j in neighbours:
                links[membership[j]] = links.get(membership[j], 0.0) + adjacency[i, j]
            best, stay_gain = own, links.get(own, 0.0) - strength[i] * totals[own] / m2
            for community in sorted(links):
                if community == own:
                    continue
                gain = links[community] - strength[i] * totals[community] / m2
                if gain > stay_gain + GAIN_TOL:
                    best = community
                    break
            membership[i] = best
            totals[best] += strength[i]
            if best != own:
                improved = moved_any = True
    _, membership = np.unique(membership, return_inverse=True)
    return membership, moved_any


def _louvain_adjacency(adjacency: np.ndarray) -> np.ndarray:
    if np.any(adjacency < 0):
        raise DomainError("Louvain weights must be nonnegative")
    if adjacency.sum() == 0:
        return np.arange(len(adjacency))
    membership = np.arange(len(adjacency))
    level = adjacency
    while True:
        local, moved = _local_moves(level)
        if not moved:
            break
        membership = local[membership]
        assign = np.zeros((len(level), local.max() + 1))
        assign[np.arange(len(level)), local] = 1.0
        level = assign.T @ level @ assign
    # renumber communities by their first node
    _, first = np.unique(membership, return_index=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[membership]


def _assignment(graph: nx.Graph, membership: np.ndarray) -> CommunityAssignment:
    groups: Dict[int, set] = {}
    for node, community in enumerate(membership):
        groups.setdefault(int(community), set()).add(node)
    q = nx_modularity(graph, list(groups.values()), weight="weight")
    return CommunityAssignment([int(c) for c in membership], float(q))


def louvain(t: Tree, weights: Optional[Sequence[float]] = None) -> CommunityAssignment:
    """Deterministic Louvain modularity optimization on the tree, edge weights w = 2 - d by default."""
    n = t.size
    w = [2.0 - d for _, _, d in t.edges] if weights is None else list(weights)
    if len(w) != len(t.edges):
        raise DomainError("one weight per tree edge is required")
    if any(x <= 0 for x in w):
        raise DomainError("Louvain edge weights must be positive")
    adjacency = np.zeros((n, n))
    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    for (i, j, _), weight in zip(t.edges, w):
        adjacency[i, j] = adjacency[j, i] = weight
        graph.add_edge(i, j, weight=weight)
    result = _assignment(graph, _louvain_adjacency(adjacency))
    logger.debug("Louvain on %d-node tree: %d communities, Q=%.4f", n, max(result.membership) + 1, result.modularity)
    return result


def louvain_full_graph(d: DistanceMatrix) -> CommunityAssignment:
    """Louvain on the complete graph with w_ij = 2 - d_ij."""
    adjacency = 2.0 - d.entries
    np.fill_diagonal(adjacency, 0.0)
    adjacency = np.clip(adjacency, 0.0, None)
    graph = nx.from_numpy_array(adjacency)
    return _assignment(graph, _louvain_adjacency(adjacency))


def hub_summary(t: Tree) -> Dict[str, object]:
    """Largest hub (lowest index among ties), its degree and the mean degree."""
    deg = t.degree_array()
    hub = int(np.argmax(deg))
    return {"hub": t.labels[hub], "degree": int(deg[hub]), "mean_degree": float(deg.mean())}


def write_tree(t: Tree, edges_path: Union[str, Path], nodes_path: Union[str, Path]) -> None:
    pd.DataFrame(
        [(t.labels[i], t.labels[j], d, 2.0 - d) for i, j, d in t.edges],
        columns=["src", "dst", "distance", "weight"],
    ).to_csv(edges_path, index=False, lineterminator="\n", float_format="%.17g")
    pd.DataFrame(
        {
            "id": t.labels,
            "size": t.sizes if t.sizes is not None else np.full(t.size, np.nan),
            "community": t.communities if t.communities is not None else [-1] * t.size,
            "degree": t.degree_array(),
        }
    ).to_csv(nodes_path, index=False, lineterminator="\n", float_format="%.17g")


def read_tree(edges_path: Union[str, Path], nodes_path: Union[str, Path]) -> Tree:
    nodes = pd.read_csv(nodes_path, dtype={"id": str})
    labels = nodes["id"].tolist()
    index = {label: k for k, label in enumerate(labels)}
    edges_frame = pd.read_csv(edges_path, dtype={"src": str, "dst": str})
    edges = []
    for src, dst, dist in edges_frame[["src", "dst", "distance"]].itertuples(index=False):
        i, j = sorted((index[src], index[dst]))
        edges.append((i, j, float(dist)))
    communities = nodes["community"].astype(int).tolist()
    return Tree(
        labels,
        edges,
        sizes=nodes["size"].to_numpy(dtype=float),
        communities=None if all(c < 0 for c in communities) else communities,
    )
