"""Toolkit for generating, analyzing, and evaluating cell-graphs carrying
tertiary lymphoid structure content: tissue simulation, the TLS-embedding
metric, a discrete graph-diffusion generative model, a marginal baseline,
distribution comparison, and a GCN data-augmentation study."""

__version__ = "0.1.0"

from .embedding import TlsEmbedding, classify_edges, partition, tls_embedding
from .graphs import CellGraph, CellTypes, GraphDataset, read_dataset, validate, write_dataset

__all__ = [
    "__version__",
    "CellGraph",
    "CellTypes",
    "GraphDataset",
    "TlsEmbedding",
    "classify_edges",
    "partition",
    "read_dataset",
    "tls_embedding",
    "validate",
    "write_dataset",
]
