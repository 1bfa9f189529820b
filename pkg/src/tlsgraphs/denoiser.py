"""The trainable reverse-process network: a small graph transformer that maps a
noisy graph plus timestep and auxiliary features to clean-state distributions
over nodes and edges.

The node stream attends over all node pairs with edge features modulating the
attention logits; the edge stream is updated from symmetrized query-key
products so edge outputs are symmetric by construction; a global stream
injects graph-level context (cycle/spectral features, timestep) into both.
Activations are tanh throughout so the network is smooth everywhere, which
keeps finite-difference gradient checks meaningful at every coordinate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autograd as ag
from .diffusion import EDGE_STATES, NoisyGraph

EIG_COUNT = 5
CYCLE_LENGTHS = (3, 4, 5)
DEFAULT_LAMBDA_E = 5.0
_PROB_FLOOR = 1e-12

# fixed input scalings keep raw counts/eigenvalues in a tanh-friendly range
_CYCLE_SCALE = 5.0
_EIG_SCALE = 8.0
_COMPONENT_SCALE = 4.0


@dataclass(frozen=True)
class AuxiliaryFeatures:
    """Graph-theoretic context: per-node cycle participation counts for cycle
    lengths 3-5, plus per-graph component count, leading Laplacian spectrum,
    and the normalized timestep."""

    cycle_counts: np.ndarray  # (n, 3) non-negative ints
    n_components: int
    top_eigenvalues: np.ndarray  # (EIG_COUNT,) descending, zero-padded
    t_norm: float


def _adjacency(noisy: NoisyGraph) -> np.ndarray:
    adj = noisy.e[:, :, 1].copy()
    np.fill_diagonal(adj, 0.0)
    return adj


def cycle_participation(adj: np.ndarray) -> np.ndarray:
    """Number of simple cycles of lengths 3, 4, 5 through each node, computed
    from powers of the adjacency matrix.

    Closed walks that revisit vertices are subtracted explicitly; the length-5
    correction removes the tadpole and backtrack walks (terms: degree-weighted
    local triangles, common-neighbor paths, and neighbor triangles).
    """
    d = adj.sum(axis=1)
    a2 = adj @ adj
    a3 = a2 @ adj
    a4 = a3 @ adj
    a5 = a4 @ adj
    diag3 = np.diag(a3).copy()
    c3 = diag3 / 2.0
    c4 = (np.diag(a4) - d * (d - 1.0) - adj @ d) / 2.0
    c5 = (
        np.diag(a5)
        - 2.0 * d * diag3
        - 2.0 * ((adj * a2) @ d)
        - adj @ diag3
        + 5.0 * diag3
    ) / 2.0
    counts = np.stack([c3, c4, c5], axis=1)
    return np.rint(counts).astype(np.int64)


def connected_components(adj: np.ndarray) -> int:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    components = 0
    for start in range(n):
        if seen[start]:
            continue
        components += 1
        queue = deque([start])
        seen[start] = True
        while queue:
            u = queue.popleft()
            for v in np.nonzero(adj[u] > 0)[0]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(int(v))
    return components


def auxiliary_features(noisy: NoisyGraph, T: int) -> AuxiliaryFeatures:
    """Cycle counts, component count, and the top eigenvalues of the
    combinatorial Laplacian of the "present" edges, plus t/T."""
    adj = _adjacency(noisy)
    counts = cycle_participation(adj)
    laplacian = np.diag(adj.sum(axis=1)) - adj
    eigs = np.linalg.eigvalsh(laplacian)[::-1]
    top = np.zeros(EIG_COUNT)
    k = min(EIG_COUNT, eigs.shape[0])
    top[:k] = eigs[:k]
    return AuxiliaryFeatures(
        cycle_counts=counts,
        n_components=connected_components(adj),
        top_eigenvalues=top,
        t_norm=noisy.t / T,
    )


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture hyperparameters; defaults are the desk-scale network."""

    b: int = 9
    layers: int = 4
    node_width: int = 64
    edge_width: int = 16
    global_width: int = 32
    heads: int = 4
    ffn_mult: int = 2

    def __post_init__(self) -> None:
        if self.node_width % self.heads != 0:
            raise ValueError("node_width must be divisible by heads")

    @property
    def head_dim(self) -> int:
        return self.node_width // self.heads

    @property
    def node_in(self) -> int:
        return self.b + len(CYCLE_LENGTHS)

    @property
    def global_in(self) -> int:
        return 2 + EIG_COUNT  # components, t/T, eigenvalues


@dataclass
class DenoiserParams:
    """All trainable tensors keyed by name; shapes derive from the config."""

    config: DenoiserConfig
    tensors: dict[str, np.ndarray]

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in self.names()])

    def unflatten(self, flat: np.ndarray) -> "DenoiserParams":
        tensors = {}
        offset = 0
        for k in self.names():
            size = self.tensors[k].size
            tensors[k] = flat[offset : offset + size].reshape(self.tensors[k].shape).copy()
            offset += size
        return DenoiserParams(self.config, tensors)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def _shapes(cfg: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    dx, de, dy, h = cfg.node_width, cfg.edge_width, cfg.global_width, cfg.heads
    fx, fe = cfg.ffn_mult * dx, cfg.ffn_mult * de
    shapes: dict[str, tuple[int, ...]] = {
        "embed_node.w": (cfg.node_in, dx),
        "embed_node.b": (dx,),
        "embed_edge.w": (EDGE_STATES, de),
        "embed_edge.b": (de,),
        "embed_global.w": (cfg.global_in, dy),
        "embed_global.b": (dy,),
        "head_node.w": (dx, cfg.b),
        "head_node.b": (cfg.b,),
        "head_edge.w": (de, EDGE_STATES),
        "head_edge.b": (EDGE_STATES,),
    }
    for l in range(cfg.layers):
        p = f"layer{l}."
        shapes.update(
            {
                p + "q": (dx, dx),
                p + "k": (dx, dx),
                p + "v": (dx, dx),
                p + "edge_att": (de, h),
                p + "att_out": (dx, dx),
                p + "global_node": (dy, dx),
                p + "ln_node1.g": (dx,),
                p + "ln_node1.b": (dx,),
                p + "ffn_node1": (dx, fx),
                p + "ffn_node1.b": (fx,),
                p + "ffn_node2": (fx, dx),
                p + "ln_node2.g": (dx,),
                p + "ln_node2.b": (dx,),
                p + "edge_mix": (de + h, de),
                p + "global_edge": (dy, de),
                p + "ln_edge1.g": (de,),
                p + "ln_edge1.b": (de,),
                p + "ffn_edge1": (de, fe),
                p + "ffn_edge1.b": (fe,),
                p + "ffn_edge2": (fe, de),
                p + "ln_edge2.g": (de,),
                p + "ln_edge2.b": (de,),
                p + "global_mix1": (dy + dx + de, dy),
                p + "global_mix1.b": (dy,),
                p + "global_mix2": (dy, dy),
                p + "ln_global.g": (dy,),
                p + "ln_global.b": (dy,),
            }
        )
    return shapes


def init_params(cfg: DenoiserConfig, rng: np.random.Generator) -> DenoiserParams:
    """Scaled uniform fan-in initialization; LayerNorm gains 1, biases 0."""
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _shapes(cfg).items():
        if name.endswith(".g"):
            tensors[name] = np.ones(shape)
        elif name.endswith(".b"):
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return DenoiserParams(cfg, tensors)


@dataclass(frozen=True)
class DenoiserOutput:
    """Predicted clean-state distributions: row-stochastic node matrix and a
    symmetric, slice-stochastic edge tensor (diagonal pinned to absent)."""

    node_probs: np.ndarray  # (n, b)
    edge_probs: np.ndarray  # (n, n, EDGE_STATES)


def _input_arrays(noisy: NoisyGraph, aux: AuxiliaryFeatures) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    node_in = np.concatenate([noisy.x, aux.cycle_counts / _CYCLE_SCALE], axis=1)
    global_in = np.concatenate(
        [
            [aux.n_components / _COMPONENT_SCALE, aux.t_norm],
            aux.top_eigenvalues / _EIG_SCALE,
        ]
    )
    return node_in, noisy.e, global_in


def forward_tensors(
    params: dict[str, ag.Tensor],
    cfg: DenoiserConfig,
    noisy: NoisyGraph,
    aux: AuxiliaryFeatures,
) -> tuple[ag.Tensor, ag.Tensor]:
    """Node and edge probability tensors on the tape; the single forward code
    path for both training and (under no_grad) inference."""
    node_in, edge_in, global_in = _input_arrays(noisy, aux)
    n = noisy.n
    scale = 1.0 / np.sqrt(cfg.head_dim)

    h = ag.matmul(ag.constant(node_in), params["embed_node.w"]) + params["embed_node.b"]
    e = (
        ag.einsum2("ijs,sd->ijd", ag.constant(edge_in), params["embed_edge.w"])
        + params["embed_edge.b"]
    )
    g = (
        ag.matmul(ag.constant(global_in.reshape(1, -1)), params["embed_global.w"])
        + params["embed_global.b"]
    )

    for l in range(cfg.layers):
        p = f"layer{l}."
        q = ag.reshape(ag.matmul(h, params[p + "q"]), (n, cfg.heads, cfg.head_dim))
        k = ag.reshape(ag.matmul(h, params[p + "k"]), (n, cfg.heads, cfg.head_dim))
        v = ag.reshape(ag.matmul(h, params[p + "v"]), (n, cfg.heads, cfg.head_dim))
        dots = ag.einsum2("ihd,jhd->ijh", q, k) * scale
        logits = dots + ag.einsum2("ijd,dh->ijh", e, params[p + "edge_att"])
        att = ag.softmax(logits, axis=1)
        gathered = ag.reshape(ag.einsum2("ijh,jhd->ihd", att, v), (n, cfg.node_width))
        h = h + ag.matmul(gathered, params[p + "att_out"]) + ag.matmul(g, params[p + "global_node"])
        h = ag.layer_norm(h, params[p + "ln_node1.g"], params[p + "ln_node1.b"])
        ffn = ag.matmul(
            ag.tanh(ag.matmul(h, params[p + "ffn_node1"]) + params[p + "ffn_node1.b"]),
            params[p + "ffn_node2"],
        )
        h = ag.layer_norm(h + ffn, params[p + "ln_node2.g"], params[p + "ln_node2.b"])

        # symmetrized pair interactions keep the edge stream symmetric
        sym = ag.mul(dots + ag.transpose(dots, (1, 0, 2)), 0.5)
        mixed = ag.einsum2(
            "ijc,cd->ijd", ag.concatenate([e, sym], axis=2), params[p + "edge_mix"]
        )
        e = e + mixed + ag.reshape(ag.matmul(g, params[p + "global_edge"]), (1, 1, cfg.edge_width))
        e = ag.layer_norm(e, params[p + "ln_edge1.g"], params[p + "ln_edge1.b"])
        effn = ag.einsum2(
            "ijf,fd->ijd",
            ag.tanh(
                ag.einsum2("ijd,df->ijf", e, params[p + "ffn_edge1"]) + params[p + "ffn_edge1.b"]
            ),
            params[p + "ffn_edge2"],
        )
        e = ag.layer_norm(e + effn, params[p + "ln_edge2.g"], params[p + "ln_edge2.b"])

        pooled = ag.concatenate(
            [
                g,
                ag.mean(h, axis=0, keepdims=True),
                ag.reshape(ag.mean(e, axis=(0, 1)), (1, cfg.edge_width)),
            ],
            axis=1,
        )
        gu = ag.matmul(
            ag.tanh(ag.matmul(pooled, params[p + "global_mix1"]) + params[p + "global_mix1.b"]),
            params[p + "global_mix2"],
        )
        g = ag.layer_norm(g + gu, params[p + "ln_global.g"], params[p + "ln_global.b"])

    node_probs = ag.softmax(
        ag.matmul(h, params["head_node.w"]) + params["head_node.b"], axis=-1
    )
    edge_logits = ag.einsum2("ijd,ds->ijs", e, params["head_edge.w"]) + params["head_edge.b"]
    edge_probs = ag.softmax(edge_logits, axis=-1)
    return node_probs, edge_probs


def _wrap_params(params: DenoiserParams) -> dict[str, ag.Tensor]:
    return {k: ag.Tensor(v) for k, v in params.tensors.items()}


def forward_pass(
    params: DenoiserParams, noisy: NoisyGraph, aux: AuxiliaryFeatures | None = None
) -> DenoiserOutput:
    """Deterministic, permutation-equivariant prediction of the clean graph."""
    if noisy.x.shape[1] != params.config.b:
        raise ValueError(
            f"graph has b={noisy.x.shape[1]} but network expects b={params.config.b}"
        )
    if aux is None:
        raise ValueError("auxiliary features required (compute via auxiliary_features)")
    with ag.no_grad():
        node_t, edge_t = forward_tensors(_wrap_params(params), params.config, noisy, aux)
    node_probs = node_t.value
    edge_probs = edge_t.value.copy()
    idx = np.arange(noisy.n)
    edge_probs[idx, idx] = 0.0
    edge_probs[idx, idx, 0] = 1.0
    return DenoiserOutput(node_probs=node_probs, edge_probs=edge_probs)


def make_denoise_fn(
    params: DenoiserParams, T: int
) -> Callable[[NoisyGraph], tuple[np.ndarray, np.ndarray]]:
    """Adapter giving the reverse sampler its clean-state prediction callable."""

    def denoise(noisy: NoisyGraph) -> tuple[np.ndarray, np.ndarray]:
        aux = auxiliary_features(noisy, T)
        out = forward_pass(params, noisy, aux)
        return out.node_probs, out.edge_probs

    return denoise


def loss(
    output: DenoiserOutput, g0: NoisyGraph, lambda_e: float = DEFAULT_LAMBDA_E
) -> float:
    """Cross-entropy against the clean graph: per-node average over the b node
    classes plus lambda_e times the per-pair average over the two edge states
    (upper triangle only; with two states the edge term is plain binary
    cross-entropy)."""
    n = g0.n
    node_states = g0.node_states()
    node_term = -np.mean(
        np.log(np.maximum(output.node_probs[np.arange(n), node_states], _PROB_FLOOR))
    )
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        edge_states = g0.edge_states()[iu, ju]
        picked = output.edge_probs[iu, ju, edge_states]
        edge_term = -np.mean(np.log(np.maximum(picked, _PROB_FLOOR)))
    else:
        edge_term = 0.0
    return float(node_term + lambda_e * edge_term)


def loss_tensors(
    node_probs: ag.Tensor,
    edge_probs: ag.Tensor,
    g0: NoisyGraph,
    lambda_e: float = DEFAULT_LAMBDA_E,
) -> ag.Tensor:
    """Same formula as loss(), expressed on the tape for training."""
    n = g0.n
    node_states = g0.node_states()
    node_term = ag.mul(
        ag.mean(ag.log(ag.take(node_probs, (np.arange(n), node_states)))), -1.0
    )
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        edge_states = g0.edge_states()[iu, ju]
        picked = ag.take(edge_probs, (iu, ju, edge_states))
        edge_term = ag.mul(ag.mean(ag.log(picked)), -1.0)
        return node_term + ag.mul(edge_term, lambda_e)
    return node_term
