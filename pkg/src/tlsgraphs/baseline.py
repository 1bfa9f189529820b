"""Non-deep-learning baseline generator capturing 1-hop statistics only.

Fits three marginals from a training set: graph size (distribution I), cell
type (II), and edge presence given the unordered cell-type pair of the
endpoints (III).  Sampling draws a size, then node types, then flips one coin
per node pair.  By construction it matches pairwise statistics and nothing
deeper, which is exactly the gap the evaluation harness probes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import CellGraph, CellTypes, GraphDataset


@dataclass(frozen=True)
class BaselineModel:
    """Fitted marginals; counts are retained alongside probabilities so the
    serialized model is auditable."""

    types: CellTypes
    size_values: np.ndarray  # observed node counts, ascending
    size_probs: np.ndarray
    type_probs: np.ndarray  # length b
    pair_edge_probs: np.ndarray  # (b, b) symmetric, p=0 for unseen pairs
    size_counts: np.ndarray
    type_counts: np.ndarray
    pair_edge_counts: np.ndarray  # (b, b) present-edge counts
    pair_totals: np.ndarray  # (b, b) node-pair population counts

    def __post_init__(self) -> None:
        if abs(self.size_probs.sum() - 1.0) > 1e-9 or abs(self.type_probs.sum() - 1.0) > 1e-9:
            raise ValueError("categoricals must sum to 1")
        if np.any(self.pair_edge_probs < 0) or np.any(self.pair_edge_probs > 1):
            raise ValueError("edge probabilities must lie in [0, 1]")


def fit(dataset: GraphDataset) -> BaselineModel:
    """Maximum-likelihood marginals pooled over the dataset.

    The pair denominator counts every unordered node pair within each graph,
    so absent pairs count as Bernoulli failures; pooling weights graphs by
    their pair counts (shared-coin MLE, not a per-graph average).
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    b = dataset.types.b
    sizes = dataset.sizes()
    size_values, size_counts = np.unique(sizes, return_counts=True)
    type_counts = np.zeros(b, dtype=np.int64)
    pair_totals = np.zeros((b, b), dtype=np.int64)
    pair_edges = np.zeros((b, b), dtype=np.int64)
    for g in dataset.graphs:
        counts = np.bincount(g.node_types, minlength=b)
        type_counts += counts
        # unordered node-pair population by type pair (upper triangle)
        outer = np.outer(counts, counts)
        same = np.diag(counts * (counts - 1) // 2)
        pair_totals += np.triu(outer, k=1) + same
        for i, j in g.edges:
            a, c = sorted((int(g.node_types[i]), int(g.node_types[j])))
            pair_edges[a, c] += 1
    # symmetrize the upper-triangular accumulators
    pair_totals = np.triu(pair_totals) + np.triu(pair_totals, k=1).T
    pair_edges = pair_edges + np.triu(pair_edges, k=1).T
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(pair_totals > 0, pair_edges / np.maximum(pair_totals, 1), 0.0)
    return BaselineModel(
        types=dataset.types,
        size_values=size_values,
        size_probs=size_counts / size_counts.sum(),
        type_probs=type_counts / type_counts.sum(),
        pair_edge_probs=probs,
        size_counts=size_counts,
        type_counts=type_counts,
        pair_edge_counts=pair_edges,
        pair_totals=pair_totals,
    )


def sample(model: BaselineModel, rng: np.random.Generator) -> CellGraph:
    """One graph by the three-step procedure: size from I, a type from II per
    node, then one Bernoulli edge draw per unordered node pair from III."""
    n = int(rng.choice(model.size_values, p=model.size_probs))
    node_types = rng.choice(model.types.b, size=n, p=model.type_probs)
    edges = []
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        p = model.pair_edge_probs[node_types[iu], node_types[ju]]
        mask = rng.random(iu.size) < p
        edges = np.stack([iu[mask], ju[mask]], axis=1)
    return CellGraph(node_types, edges)


def sample_dataset(
    model: BaselineModel, n_graphs: int, rng: np.random.Generator
) -> GraphDataset:
    graphs = tuple(sample(model, rng) for _ in range(n_graphs))
    return GraphDataset(graphs, None, "baseline", model.types)


def save_model(model: BaselineModel, path: str | Path) -> None:
    """Human-readable JSON document with counts kept next to probabilities."""
    doc = {
        "b": model.types.b,
        "b_cell": model.types.b_cell,
        "t_cell": model.types.t_cell,
        "cell_type_names": list(model.types.names),
        "distribution_I": {
            "sizes": model.size_values.tolist(),
            "counts": model.size_counts.tolist(),
            "probs": model.size_probs.tolist(),
        },
        "distribution_II": {
            "counts": model.type_counts.tolist(),
            "probs": model.type_probs.tolist(),
        },
        "distribution_III": {
            "edge_counts": model.pair_edge_counts.tolist(),
            "pair_totals": model.pair_totals.tolist(),
            "probs": model.pair_edge_probs.tolist(),
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> BaselineModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    types = CellTypes(
        b=int(doc["b"]),
        b_cell=int(doc["b_cell"]),
        t_cell=int(doc["t_cell"]),
        names=tuple(doc["cell_type_names"]),
    )
    return BaselineModel(
        types=types,
        size_values=np.asarray(doc["distribution_I"]["sizes"], dtype=np.int64),
        size_probs=np.asarray(doc["distribution_I"]["probs"]),
        type_probs=np.asarray(doc["distribution_II"]["probs"]),
        pair_edge_probs=np.asarray(doc["distribution_III"]["probs"]),
        size_counts=np.asarray(doc["distribution_I"]["counts"], dtype=np.int64),
        type_counts=np.asarray(doc["distribution_II"]["counts"], dtype=np.int64),
        pair_edge_counts=np.asarray(doc["distribution_III"]["edge_counts"], dtype=np.int64),
        pair_totals=np.asarray(doc["distribution_III"]["pair_totals"], dtype=np.int64),
    )
