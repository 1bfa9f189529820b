"""TLS content of a cell-graph: edge classification, the 6-dim embedding, and
partitioning datasets into high / low TLS content populations.

Only edges between B- and T-cells enter the computation.  A kept edge joining
two cells of the same type is an alpha edge; a B-T edge is a gamma_k edge,
where k counts the B-cells adjacent to its B endpoint.  The embedding entry
kappa(a) is the proportion of gamma edges whose index exceeds a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import CellGraph, CellTypes, GraphDataset

EMBEDDING_DIM = 6
TLS_THRESHOLD = 0.05  # strict: kappa(2) > 0.05 is TLS, kappa(1) < 0.05 is non-TLS


@dataclass(frozen=True)
class EdgeClassCounts:
    """Counts of kept (B/T-only) edges split into the alpha / gamma_k classes."""

    total_kept: int
    alpha: int
    gamma: dict[int, int]

    def __post_init__(self) -> None:
        if self.alpha + sum(self.gamma.values()) != self.total_kept:
            raise ValueError("alpha + sum(gamma) must equal total_kept")

    def gamma_total(self) -> int:
        return self.total_kept - self.alpha


@dataclass(frozen=True)
class TlsEmbedding:
    """The vector [kappa(0)..kappa(5)]; degenerate when the graph has no gamma edges."""

    kappa: tuple[float, ...]
    degenerate: bool = False

    def __post_init__(self) -> None:
        if len(self.kappa) != EMBEDDING_DIM:
            raise ValueError(f"expected {EMBEDDING_DIM} entries")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.kappa, dtype=np.float64)


def classify_edges(graph: CellGraph, types: CellTypes = CellTypes()) -> EdgeClassCounts:
    """Classify kept edges into alpha and gamma_k.

    gamma_k's neighbor count k uses the B endpoint's B-cell neighbors in the
    full graph; B-B edges are themselves kept, so this equals the count in the
    kept subgraph.
    """
    node_types = graph.node_types
    is_b = node_types == types.b_cell
    is_t = node_types == types.t_cell
    b_neighbor_count = np.zeros(graph.n, dtype=np.int64)
    for i, j in graph.edges:
        if is_b[j]:
            b_neighbor_count[i] += 1
        if is_b[i]:
            b_neighbor_count[j] += 1
    total_kept = 0
    alpha = 0
    gamma: dict[int, int] = {}
    for i, j in graph.edges:
        bt_i = is_b[i] or is_t[i]
        bt_j = is_b[j] or is_t[j]
        if not (bt_i and bt_j):
            continue
        total_kept += 1
        if node_types[i] == node_types[j]:
            alpha += 1
        else:
            b_end = i if is_b[i] else j
            k = int(b_neighbor_count[b_end])
            gamma[k] = gamma.get(k, 0) + 1
    return EdgeClassCounts(total_kept, alpha, gamma)


def embedding_from_counts(counts: EdgeClassCounts) -> TlsEmbedding:
    denom = counts.gamma_total()
    if denom == 0:
        return TlsEmbedding((0.0,) * EMBEDDING_DIM, degenerate=True)
    kappa = []
    cumulative = 0
    for a in range(EMBEDDING_DIM):
        cumulative += counts.gamma.get(a, 0)
        kappa.append((denom - cumulative) / denom)
    return TlsEmbedding(tuple(kappa), degenerate=False)


def tls_embedding(graph: CellGraph, types: CellTypes = CellTypes()) -> TlsEmbedding:
    """kappa(a) for a = 0..5; a zero vector with the degenerate flag when the
    graph has no B-T edges."""
    return embedding_from_counts(classify_edges(graph, types))


def is_tls(emb: TlsEmbedding) -> bool:
    return not emb.degenerate and emb.kappa[2] > TLS_THRESHOLD


def is_non_tls(emb: TlsEmbedding) -> bool:
    return not emb.degenerate and emb.kappa[1] < TLS_THRESHOLD


def partition(
    dataset: GraphDataset, degenerate_to_non_tls: bool = False
) -> tuple[GraphDataset, GraphDataset, GraphDataset]:
    """Split a dataset into (tls, non_tls, discarded) by the kappa criteria.

    Monotonicity (kappa(1) >= kappa(2)) makes the two criteria mutually
    exclusive, so every graph lands in exactly one bucket.  Degenerate graphs
    (no B-T interaction at all) go to non_tls only when the caller opts in.
    """
    tls_graphs: list[CellGraph] = []
    non_tls_graphs: list[CellGraph] = []
    discarded_graphs: list[CellGraph] = []
    for graph in dataset.graphs:
        emb = tls_embedding(graph, dataset.types)
        if emb.degenerate:
            (non_tls_graphs if degenerate_to_non_tls else discarded_graphs).append(graph)
        elif is_tls(emb):
            tls_graphs.append(graph)
        elif is_non_tls(emb):
            non_tls_graphs.append(graph)
        else:
            discarded_graphs.append(graph)
    mk = lambda graphs, label: GraphDataset(
        tuple(graphs),
        tuple([label] * len(graphs)) if label else None,
        dataset.provenance,
        dataset.types,
    )
    return (
        mk(tls_graphs, "tls"),
        mk(non_tls_graphs, "non_tls"),
        mk(discarded_graphs, None),
    )


def embed_dataset(dataset: GraphDataset) -> list[TlsEmbedding]:
    return [tls_embedding(g, dataset.types) for g in dataset.graphs]


def assigned_class(emb: TlsEmbedding, degenerate_to_non_tls: bool = False) -> str:
    """Bucket name for one embedding, mirroring partition()."""
    if emb.degenerate:
        return "non_tls" if degenerate_to_non_tls else "discarded"
    if is_tls(emb):
        return "tls"
    if is_non_tls(emb):
        return "non_tls"
    return "discarded"
