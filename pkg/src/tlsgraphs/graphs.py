"""Core cell-graph data types, validation, one-hot views, and JSONL serialization.

A cell-graph is an unweighted, undirected graph whose nodes carry categorical
cell types and whose edges encode spatial adjacency.  Edges are stored once as
unordered index pairs (i < j); symmetric tensors are derived views, never
stored, so symmetry bugs cannot enter at the source.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_B = 9

#: Display names for the default 9-type alphabet.  Only B and T are contract;
#: the remaining names are configuration.
DEFAULT_TYPE_NAMES = (
    "B-cell",
    "T-cell",
    "macrophage",
    "dendritic",
    "NK-cell",
    "neutrophil",
    "tumor",
    "stromal",
    "endothelial",
)


class DatasetFormatError(ValueError):
    """Raised when a dataset file violates the JSONL graph format."""


@dataclass(frozen=True)
class CellTypes:
    """Cell-type alphabet: ids 0..b-1 with designated B- and T-cell ids."""

    b: int = DEFAULT_B
    b_cell: int = 0
    t_cell: int = 1
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.b < 2:
            raise ValueError(f"need at least 2 cell types, got b={self.b}")
        if not (0 <= self.b_cell < self.b) or not (0 <= self.t_cell < self.b):
            raise ValueError("B/T ids must lie in [0, b)")
        if self.b_cell == self.t_cell:
            raise ValueError("B and T ids must differ")
        if not self.names:
            names = [f"type-{i}" for i in range(self.b)]
            for i, name in enumerate(DEFAULT_TYPE_NAMES[: self.b]):
                names[i] = name
            object.__setattr__(self, "names", tuple(names))
        elif len(self.names) != self.b:
            raise ValueError(f"expected {self.b} names, got {len(self.names)}")


def _canonical_edges(edges: Iterable[Sequence[int]]) -> np.ndarray:
    """Edges as a unique, lexicographically sorted (m, 2) array with i < j rows."""
    arr = np.asarray(list(edges), dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"edges must be pairs, got shape {arr.shape}")
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    stacked = np.stack([lo, hi], axis=1)
    return np.unique(stacked, axis=0)


@dataclass(frozen=True, eq=False)
class CellGraph:
    """Immutable cell-graph: categorical node types plus unordered edge pairs.

    positions, when present, are 2-D coordinates in micrometers, one per node.
    """

    node_types: np.ndarray
    edges: np.ndarray
    positions: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "node_types", np.asarray(self.node_types, dtype=np.int64).reshape(-1)
        )
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
            object.__setattr__(self, "positions", pos)
        self.node_types.setflags(write=False)
        self.edges.setflags(write=False)
        if self.positions is not None:
            self.positions.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.node_types.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.edges}

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix (derived view)."""
        a = np.zeros((self.n, self.n), dtype=np.int64)
        if self.n_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1
            a[self.edges[:, 1], self.edges[:, 0]] = 1
        return a

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CellGraph):
            return NotImplemented
        if not np.array_equal(self.node_types, other.node_types):
            return False
        if not np.array_equal(self.edges, other.edges):
            return False
        if (self.positions is None) != (other.positions is None):
            return False
        if self.positions is not None and not np.array_equal(self.positions, other.positions):
            return False
        return True

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"CellGraph(n={self.n}, edges={self.n_edges}, pos={self.positions is not None})"


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate(): the list of violated invariants (empty == valid)."""

    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(graph: CellGraph, types: CellTypes = CellTypes()) -> ValidationReport:
    """Check every structural invariant of a cell-graph; report, never raise."""
    violations: list[str] = []
    n = graph.n
    if np.any(graph.node_types < 0) or np.any(graph.node_types >= types.b):
        violations.append(f"node type out of range [0, {types.b})")
    if graph.n_edges:
        if np.any(graph.edges[:, 0] == graph.edges[:, 1]):
            violations.append("self-loop")
        if np.any(graph.edges < 0) or np.any(graph.edges >= n):
            violations.append("endpoint out of range")
    if graph.positions is not None:
        if graph.positions.shape[0] != n:
            violations.append("positions length mismatch")
        if not np.all(np.isfinite(graph.positions)):
            violations.append("non-finite position")
    return ValidationReport(tuple(violations))


def one_hot_views(graph: CellGraph, types: CellTypes = CellTypes()) -> tuple[np.ndarray, np.ndarray]:
    """One-hot node matrix (n, b) and symmetric edge tensor (n, n, 2).

    Edge state 0 is "absent", state 1 "present"; the diagonal is marked absent.
    """
    report = validate(graph, types)
    if not report.ok:
        raise ValueError(f"invalid graph: {'; '.join(report.violations)}")
    n = graph.n
    x = np.zeros((n, types.b), dtype=np.float64)
    x[np.arange(n), graph.node_types] = 1.0
    e = np.zeros((n, n, 2), dtype=np.float64)
    e[:, :, 0] = 1.0
    for i, j in graph.edges:
        e[i, j, 0] = e[j, i, 0] = 0.0
        e[i, j, 1] = e[j, i, 1] = 1.0
    return x, e


@dataclass(frozen=True)
class GraphDataset:
    """A sequence of cell-graphs sharing one type alphabet.

    labels, when present, tag each graph "tls" or "non_tls"; provenance records
    which stage emitted the dataset (real-sim | diffusion | baseline).
    """

    graphs: tuple[CellGraph, ...]
    labels: Optional[tuple[str, ...]] = None
    provenance: str = "real-sim"
    types: CellTypes = field(default_factory=CellTypes)

    def __post_init__(self) -> None:
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != len(self.graphs):
                raise ValueError("labels length must match graphs")
            bad = [l for l in self.labels if l not in ("tls", "non_tls")]
            if bad:
                raise ValueError(f"unknown labels: {sorted(set(bad))}")

    def __len__(self) -> int:
        return len(self.graphs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphDataset):
            return NotImplemented
        return (
            self.graphs == other.graphs
            and self.labels == other.labels
            and self.provenance == other.provenance
            and self.types == other.types
        )

    def sizes(self) -> np.ndarray:
        return np.array([g.n for g in self.graphs], dtype=np.int64)


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_dataset(dataset: GraphDataset, path: str | Path) -> None:
    """Write JSON Lines (one graph per line) plus the sidecar header file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for idx, graph in enumerate(dataset.graphs):
            record: dict = {
                "nodes": [int(t) for t in graph.node_types],
                "edges": [[int(i), int(j)] for i, j in graph.edges],
            }
            if graph.positions is not None:
                record["pos"] = [[float(x), float(y)] for x, y in graph.positions]
            if dataset.labels is not None:
                record["label"] = dataset.labels[idx]
            fh.write(json.dumps(record) + "\n")
    header = {
        "b": dataset.types.b,
        "b_cell": dataset.types.b_cell,
        "t_cell": dataset.types.t_cell,
        "cell_type_names": list(dataset.types.names),
        "provenance": dataset.provenance,
    }
    with _sidecar_path(path).open("w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_line(line: str, lineno: int, b: int) -> tuple[CellGraph, Optional[str]]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(record, dict) or "nodes" not in record:
        raise DatasetFormatError(f"line {lineno}: expected object with 'nodes'")
    nodes = record["nodes"]
    if not isinstance(nodes, list) or not all(isinstance(t, int) for t in nodes):
        raise DatasetFormatError(f"line {lineno}: 'nodes' must be a list of ints")
    n = len(nodes)
    if any(t < 0 or t >= b for t in nodes):
        raise DatasetFormatError(f"line {lineno}: node type out of range for b={b}")
    edges = record.get("edges", [])
    for pair in edges:
        if not (isinstance(pair, list) and len(pair) == 2):
            raise DatasetFormatError(f"line {lineno}: malformed edge {pair!r}")
        i, j = pair
        if i == j:
            raise DatasetFormatError(f"line {lineno}: self-loop edge {pair!r}")
        if not (0 <= i < n and 0 <= j < n):
            raise DatasetFormatError(f"line {lineno}: edge index out of range {pair!r}")
    positions = record.get("pos")
    if positions is not None and len(positions) != n:
        raise DatasetFormatError(f"line {lineno}: 'pos' length mismatch")
    label = record.get("label")
    if label is not None and label not in ("tls", "non_tls"):
        raise DatasetFormatError(f"line {lineno}: unknown label {label!r}")
    return CellGraph(np.array(nodes), edges, positions), label


def read_dataset(path: str | Path, types: Optional[CellTypes] = None) -> GraphDataset:
    """Read a JSONL dataset; the sidecar header, when present, wins over defaults."""
    path = Path(path)
    provenance = "real-sim"
    sidecar = _sidecar_path(path)
    if types is None:
        if sidecar.exists():
            header = json.loads(sidecar.read_text(encoding="utf-8"))
            types = CellTypes(
                b=int(header["b"]),
                b_cell=int(header.get("b_cell", 0)),
                t_cell=int(header.get("t_cell", 1)),
                names=tuple(header.get("cell_type_names", ())),
            )
            provenance = str(header.get("provenance", provenance))
        else:
            types = CellTypes()
    graphs: list[CellGraph] = []
    labels: list[Optional[str]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            graph, label = _parse_line(line, lineno, types.b)
            graphs.append(graph)
            labels.append(label)
    if any(l is not None for l in labels):
        if any(l is None for l in labels):
            raise DatasetFormatError("mixed labeled and unlabeled lines")
        return GraphDataset(tuple(graphs), tuple(labels), provenance, types)  # type: ignore[arg-type]
    return GraphDataset(tuple(graphs), None, provenance, types)
