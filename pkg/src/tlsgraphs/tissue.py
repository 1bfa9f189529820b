"""Procedural tissue simulation and the cell-graph extraction pipeline.

Stands in for private whole-slide data: TLS-like foci are laid down as a dense
Gaussian disc of B-cells wrapped in an annulus of T-cells, on top of a
homogeneous Poisson background of all cell types.  The extraction pipeline is
Delaunay triangulation, 30 um edge thresholding, and 4-hop subgraphs centered
on B-cells.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .delaunay import delaunay_edges
from .embedding import partition
from .graphs import CellGraph, CellTypes, GraphDataset
from .rng import child_seed_sequence

EDGE_THRESHOLD_UM = 30.0
SUBGRAPH_HOPS = 4


@dataclass(frozen=True)
class TissueParams:
    """Knobs of the point-pattern simulator; one instance describes one field."""

    field_size: tuple[float, float] = (600.0, 600.0)
    n_tls_seeds: int = 3
    cluster_radius: float = 18.0
    bcells_per_cluster: int = 12
    tcells_per_cluster: int = 16
    tcell_annulus: tuple[float, float] = (20.0, 40.0)
    background_density: float = 1.6e-4  # cells per um^2 per cell type
    n_decoy_seeds: int = 0
    rng_seed: int = 0
    types: CellTypes = field(default_factory=CellTypes)

    def __post_init__(self) -> None:
        if self.field_size[0] <= 0 or self.field_size[1] <= 0:
            raise ValueError("field_size must be positive")
        if self.cluster_radius <= 0:
            raise ValueError("cluster_radius must be positive")
        if not (0 < self.tcell_annulus[0] < self.tcell_annulus[1]):
            raise ValueError("annulus must satisfy 0 < inner < outer")
        if self.background_density < 0:
            raise ValueError("background_density must be >= 0")
        if self.n_tls_seeds < 0 or self.bcells_per_cluster < 0 or self.tcells_per_cluster < 0:
            raise ValueError("counts must be >= 0")
        if self.n_decoy_seeds < 0:
            raise ValueError("counts must be >= 0")

    @property
    def cluster_sigma(self) -> float:
        return self.cluster_radius / 2.0

    @property
    def bcell_max_radius(self) -> float:
        return self.cluster_radius + 3.0 * self.cluster_sigma


@dataclass(frozen=True)
class PointPattern:
    """Simulated cells: positions in micrometers plus integer cell types."""

    positions: np.ndarray  # (n, 2) float64
    cell_types: np.ndarray  # (n,) int64

    def __post_init__(self) -> None:
        object.__setattr__(self, "positions", np.asarray(self.positions, np.float64).reshape(-1, 2))
        object.__setattr__(self, "cell_types", np.asarray(self.cell_types, np.int64).reshape(-1))
        if self.positions.shape[0] != self.cell_types.shape[0]:
            raise ValueError("positions / cell_types length mismatch")

    @property
    def n(self) -> int:
        return int(self.cell_types.shape[0])


def simulate_tissue(params: TissueParams) -> PointPattern:
    """Deterministic point pattern for the given parameters and seed."""
    rng = np.random.default_rng(child_seed_sequence(params.rng_seed, "tissue-sim"))
    width, height = params.field_size
    margin = min(max(params.tcell_annulus[1], params.bcell_max_radius), min(width, height) / 2)
    positions: list[np.ndarray] = []
    type_blocks: list[np.ndarray] = []

    for _ in range(params.n_tls_seeds):
        center = rng.uniform([margin, margin], [width - margin, height - margin])
        # B-cell nucleus: Gaussian disc, hard-truncated so the placement radius
        # is a testable guarantee rather than a high-probability event
        b_pts = np.empty((params.bcells_per_cluster, 2))
        for i in range(params.bcells_per_cluster):
            while True:
                offset = rng.normal(0.0, params.cluster_sigma, size=2)
                if np.hypot(*offset) <= params.bcell_max_radius:
                    b_pts[i] = center + offset
                    break
        # supporting T-cells: uniform in the annulus
        inner, outer = params.tcell_annulus
        radii = np.sqrt(rng.uniform(inner**2, outer**2, size=params.tcells_per_cluster))
        angles = rng.uniform(0.0, 2.0 * np.pi, size=params.tcells_per_cluster)
        t_pts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1) + center
        positions.extend([b_pts, t_pts])
        type_blocks.append(np.full(params.bcells_per_cluster, params.types.b_cell, np.int64))
        type_blocks.append(np.full(params.tcells_per_cluster, params.types.t_cell, np.int64))

    # decoy foci: a B-cell pair with a thin T ring; TLS-flavored composition
    # that stays below the high-TLS criterion (hard negatives for downstream
    # classification)
    for _ in range(params.n_decoy_seeds):
        center = rng.uniform([margin, margin], [width - margin, height - margin])
        b_pts = center + rng.normal(0.0, 3.0, size=(2, 2))
        n_t = int(rng.integers(3, 7))
        radii = np.sqrt(rng.uniform(8.0**2, 20.0**2, size=n_t))
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_t)
        t_pts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1) + center
        positions.extend([b_pts, t_pts])
        type_blocks.append(np.full(2, params.types.b_cell, np.int64))
        type_blocks.append(np.full(n_t, params.types.t_cell, np.int64))

    area = width * height
    for cell_type in range(params.types.b):
        count = rng.poisson(params.background_density * area)
        pts = rng.uniform([0.0, 0.0], [width, height], size=(count, 2))
        positions.append(pts)
        type_blocks.append(np.full(count, cell_type, np.int64))

    if not positions:
        return PointPattern(np.zeros((0, 2)), np.zeros(0, np.int64))
    all_pts = np.clip(
        np.concatenate(positions), [0.0, 0.0], [width, height]
    )  # clusters near the rim stay inside the field
    return PointPattern(all_pts, np.concatenate(type_blocks))


def threshold_edges(
    edges: np.ndarray, points: np.ndarray, max_len: float = EDGE_THRESHOLD_UM
) -> np.ndarray:
    """Keep exactly the edges of Euclidean length <= max_len.

    Lengths are compared as squared distances, so a constructed length of
    exactly max_len is kept and anything longer is dropped.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0] == 0 or np.isinf(max_len):
        return edges
    points = np.asarray(points, dtype=np.float64)
    delta = points[edges[:, 0]] - points[edges[:, 1]]
    sq = np.sum(delta * delta, axis=1)
    return edges[sq <= max_len * max_len]


def graph_from_pattern(
    pattern: PointPattern,
    types: CellTypes = CellTypes(),
    max_edge_len: float = EDGE_THRESHOLD_UM,
) -> CellGraph:
    """Whole-field cell-graph: Delaunay adjacency pruned at max_edge_len."""
    edges = delaunay_edges(pattern.positions)
    edges = threshold_edges(edges, pattern.positions, max_edge_len)
    return CellGraph(pattern.cell_types, edges, pattern.positions)


def _bfs_ball(adj: list[list[int]], center: int, hops: int) -> list[int]:
    dist = {center: 0}
    order = [center]
    frontier = deque([center])
    while frontier:
        u = frontier.popleft()
        if dist[u] == hops:
            continue
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                order.append(v)
                frontier.append(v)
    return sorted(order)


def extract_subgraphs(
    graph: CellGraph,
    hops: int = SUBGRAPH_HOPS,
    types: CellTypes = CellTypes(),
    stride: int = 1,
    max_subgraphs: Optional[int] = None,
) -> GraphDataset:
    """Induced subgraphs on the hop-neighborhoods of B-cells.

    One subgraph per sampled center; `stride` takes every stride-th B-cell in
    index order and `max_subgraphs` caps the total, which together control how
    much the (allowed) overlaps inflate the dataset.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    adj: list[list[int]] = [[] for _ in range(graph.n)]
    for i, j in graph.edges:
        adj[i].append(int(j))
        adj[j].append(int(i))
    centers = [i for i in range(graph.n) if graph.node_types[i] == types.b_cell][::stride]
    if max_subgraphs is not None:
        centers = centers[:max_subgraphs]
    subgraphs = []
    for center in centers:
        keep = _bfs_ball(adj, center, hops)
        index_of = {old: new for new, old in enumerate(keep)}
        keep_set = set(keep)
        sub_edges = [
            (index_of[int(i)], index_of[int(j)])
            for i, j in graph.edges
            if int(i) in keep_set and int(j) in keep_set
        ]
        positions = graph.positions[keep] if graph.positions is not None else None
        subgraphs.append(CellGraph(graph.node_types[keep], sub_edges, positions))
    return GraphDataset(tuple(subgraphs), None, "real-sim", types)


def build_corpus(
    params: TissueParams,
    size_bounds: tuple[int, int] = (20, 103),
    n_fields: int = 1,
    stride: int = 1,
    max_subgraphs_per_field: Optional[int] = None,
) -> tuple[GraphDataset, GraphDataset]:
    """Full pipeline: simulate fields, triangulate, threshold, extract 4-hop
    subgraphs, filter by node count, and split by TLS content.

    Field f uses the child seed (params.rng_seed, f), so the corpus is a pure
    function of (params, n_fields).
    """
    lo, hi = size_bounds
    kept: list[CellGraph] = []
    for f in range(n_fields):
        field_seed = int(np.random.SeedSequence([params.rng_seed & (2**64 - 1), f]).generate_state(1)[0])
        pattern = simulate_tissue(replace(params, rng_seed=field_seed))
        if pattern.n == 0:
            continue
        graph = graph_from_pattern(pattern, params.types)
        dataset = extract_subgraphs(
            graph, SUBGRAPH_HOPS, params.types, stride, max_subgraphs_per_field
        )
        kept.extend(g for g in dataset.graphs if lo <= g.n <= hi)
    pool = GraphDataset(tuple(kept), None, "real-sim", params.types)
    tls, non_tls, _ = partition(pool)
    return tls, non_tls
