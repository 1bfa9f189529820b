"""Discrete graph diffusion with the marginal noise model.

The forward process independently corrupts node types and edge states through
transition matrices Q^t = alpha^t I + (1 - alpha^t) 1 m', whose fixed point is
the training-set marginal m.  The family is closed under products, so jumping
t steps forward is a single draw.  The reverse process alternates a clean-graph
prediction with closed-form posterior resampling for T steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .graphs import CellGraph, CellTypes, GraphDataset, one_hot_views

COSINE_OFFSET = 0.008
ALPHA_BAR_FLOOR = 1e-8
EDGE_STATES = 2  # absent, present

DEFAULT_T = 500
DESK_T = 50


def cosine_alpha_bar(t: int, T: int, s: float = COSINE_OFFSET) -> float:
    """Raw cosine-schedule value cos^2((pi/2) (t/T + s)/(1 + s)), clipped to
    [1e-8, 1]."""
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    value = math.cos((math.pi / 2.0) * ((t / T + s) / (1.0 + s))) ** 2
    return min(1.0, max(ALPHA_BAR_FLOOR, value))


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step retention coefficients alpha[t] (t = 1..T) and the cumulative
    products alpha_bar[t] (t = 0..T, alpha_bar[0] = 1)."""

    T: int
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @classmethod
    def cosine(cls, T: int, s: float = COSINE_OFFSET) -> "NoiseSchedule":
        raw = np.array([cosine_alpha_bar(t, T, s) for t in range(T + 1)])
        alpha = np.ones(T + 1)
        alpha[1:] = raw[1:] / raw[:-1]
        alpha_bar = np.ones(T + 1)
        alpha_bar[1:] = np.cumprod(alpha[1:])
        return cls(T=T, alpha=alpha, alpha_bar=alpha_bar)

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.alpha.shape != (self.T + 1,) or self.alpha_bar.shape != (self.T + 1,):
            raise ValueError("schedule arrays must have length T + 1")
        if np.any(self.alpha[1:] < 0) or np.any(self.alpha[1:] > 1):
            raise ValueError("alpha values must lie in [0, 1]")
        if np.any(np.diff(self.alpha_bar) > 1e-15):
            raise ValueError("alpha_bar must be non-increasing")


def transition_matrix(alpha_t: float, m: np.ndarray) -> np.ndarray:
    """Q = alpha I + (1 - alpha) 1 m'; every row is a distribution."""
    if not 0.0 <= alpha_t <= 1.0:
        raise ValueError(f"alpha_t={alpha_t} outside [0, 1]")
    m = np.asarray(m, dtype=np.float64)
    return alpha_t * np.eye(m.shape[0]) + (1.0 - alpha_t) * np.outer(np.ones(m.shape[0]), m)


def _check_marginal(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
        raise ValueError(f"{name} must be a probability vector (sum within 1e-12 of 1)")
    return m


@dataclass(frozen=True)
class NoiseModel:
    """Marginal distributions over node types and edge states plus a schedule."""

    m_x: np.ndarray
    m_e: np.ndarray
    schedule: NoiseSchedule

    def __post_init__(self) -> None:
        object.__setattr__(self, "m_x", _check_marginal(self.m_x, "m_x"))
        object.__setattr__(self, "m_e", _check_marginal(self.m_e, "m_e"))

    @property
    def T(self) -> int:
        return self.schedule.T

    @property
    def b(self) -> int:
        return int(self.m_x.shape[0])

    def q_x(self, t: int) -> np.ndarray:
        return transition_matrix(float(self.schedule.alpha[t]), self.m_x)

    def q_e(self, t: int) -> np.ndarray:
        return transition_matrix(float(self.schedule.alpha[t]), self.m_e)

    def q_bar_x(self, t: int) -> np.ndarray:
        return transition_matrix(float(self.schedule.alpha_bar[t]), self.m_x)

    def q_bar_e(self, t: int) -> np.ndarray:
        return transition_matrix(float(self.schedule.alpha_bar[t]), self.m_e)


def estimate_marginals(dataset: GraphDataset) -> tuple[np.ndarray, np.ndarray]:
    """Empirical node-type marginal and edge-state marginal (over all unordered
    node pairs, so absence dominates and sparsity is preserved)."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    b = dataset.types.b
    type_counts = np.zeros(b, dtype=np.float64)
    pair_total = 0
    edge_total = 0
    for g in dataset.graphs:
        type_counts += np.bincount(g.node_types, minlength=b)
        pair_total += g.n * (g.n - 1) // 2
        edge_total += g.n_edges
    m_x = type_counts / type_counts.sum()
    if pair_total == 0:
        m_e = np.array([1.0, 0.0])
    else:
        p = edge_total / pair_total
        m_e = np.array([1.0 - p, p])
    return m_x, m_e


@dataclass(frozen=True)
class NoisyGraph:
    """One-hot graph state G^t on the diffusion trajectory."""

    x: np.ndarray  # (n, b) one-hot rows
    e: np.ndarray  # (n, n, EDGE_STATES) one-hot, symmetric, diagonal absent
    t: int

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def b(self) -> int:
        return int(self.x.shape[1])

    def node_states(self) -> np.ndarray:
        return np.argmax(self.x, axis=1)

    def edge_states(self) -> np.ndarray:
        return np.argmax(self.e, axis=2)

    @classmethod
    def from_cell_graph(cls, graph: CellGraph, types: CellTypes, t: int = 0) -> "NoisyGraph":
        x, e = one_hot_views(graph, types)
        return cls(x=x, e=e, t=t)

    def to_cell_graph(self) -> CellGraph:
        states = self.edge_states()
        iu, ju = np.triu_indices(self.n, k=1)
        present = states[iu, ju] == 1
        edges = np.stack([iu[present], ju[present]], axis=1)
        return CellGraph(self.node_states(), edges)


def _one_hot(states: np.ndarray, depth: int) -> np.ndarray:
    out = np.zeros((*states.shape, depth), dtype=np.float64)
    np.put_along_axis(out, states[..., None], 1.0, axis=-1)
    return out


def _resample_graph(
    node_probs: np.ndarray, edge_probs: np.ndarray, t: int, rng: np.random.Generator
) -> NoisyGraph:
    """Draw one-hot node and edge states; upper triangle mirrored, diagonal absent."""
    n, b = node_probs.shape
    node_u = rng.random((n, 1))
    node_states = (node_probs.cumsum(axis=1) < node_u).sum(axis=1)
    node_states = np.minimum(node_states, b - 1)
    edge_states = np.zeros((n, n), dtype=np.int64)
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        edge_u = rng.random((iu.size, 1))
        upper = (edge_probs[iu, ju].cumsum(axis=1) < edge_u).sum(axis=1)
        upper = np.minimum(upper, EDGE_STATES - 1)
        edge_states[iu, ju] = upper
        edge_states[ju, iu] = upper
    e = _one_hot(edge_states, EDGE_STATES)
    e[np.arange(n), np.arange(n)] = np.array([1.0] + [0.0] * (EDGE_STATES - 1))
    return NoisyGraph(x=_one_hot(node_states, b), e=e, t=t)


def forward_step(g_prev: NoisyGraph, model: NoiseModel, rng: np.random.Generator) -> NoisyGraph:
    """One forward corruption step: resample every node and upper-triangle edge
    from its row of the step transition matrix."""
    if g_prev.t >= model.T:
        raise ValueError(f"cannot step beyond T={model.T}")
    t = g_prev.t + 1
    node_probs = g_prev.x @ model.q_x(t)
    edge_probs = g_prev.e @ model.q_e(t)
    return _resample_graph(node_probs, edge_probs, t, rng)


def forward_jump(
    g0: NoisyGraph, t_target: int, model: NoiseModel, rng: np.random.Generator
) -> NoisyGraph:
    """Sample q(G^t | G^0) in one draw through the cumulative matrix Q-bar^t."""
    if not 1 <= t_target <= model.T:
        raise ValueError(f"t_target={t_target} outside [1, {model.T}]")
    if g0.t != 0:
        raise ValueError("forward_jump starts from a clean graph (t = 0)")
    node_probs = g0.x @ model.q_bar_x(t_target)
    edge_probs = g0.e @ model.q_bar_e(t_target)
    return _resample_graph(node_probs, edge_probs, t_target, rng)


class ImpossibleStateError(ValueError):
    """Posterior normalizer vanished: the (t, x_t) pair cannot occur."""


def posterior(
    x_t: np.ndarray,
    x0_probs: np.ndarray,
    model: NoiseModel,
    t: int,
    kind: str = "node",
) -> np.ndarray:
    """Mixture posterior sum_x0 p(x0) q(x^{t-1} | x^t, x0) for one variable.

    q(x^{t-1} | x^t, x0) is proportional to (Q^t x^t) * (x0' Q-bar^{t-1}),
    normalized per clean state before mixing.  At t = 1 the reverse step
    produces x^0 itself, so the mixture collapses to x0_probs.
    """
    if not 1 <= t <= model.T:
        raise ValueError(f"t={t} outside [1, {model.T}]")
    x0_probs = np.asarray(x0_probs, dtype=np.float64)
    if t == 1:
        return x0_probs / x0_probs.sum()
    if kind == "node":
        q_t, q_bar_prev = model.q_x(t), model.q_bar_x(t - 1)
    elif kind == "edge":
        q_t, q_bar_prev = model.q_e(t), model.q_bar_e(t - 1)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    x_t = np.asarray(x_t, dtype=np.float64)
    left = q_t @ x_t  # component j: q(x^t | x^{t-1} = j)
    unnorm = left[None, :] * q_bar_prev  # row i0: q(x^{t-1} = j | x0 = i0) * left
    norms = unnorm.sum(axis=1)
    weights = x0_probs
    if np.any((norms <= 0) & (weights > 0)):
        state = int(np.argmax(x_t))
        raise ImpossibleStateError(f"zero posterior normalizer at t={t}, x_t state {state}")
    safe = np.where(norms > 0, norms, 1.0)
    mixed = (weights / safe) @ unnorm
    total = mixed.sum()
    if total <= 0:
        state = int(np.argmax(x_t))
        raise ImpossibleStateError(f"zero posterior mixture at t={t}, x_t state {state}")
    return mixed / total


def posterior_batch(
    states: np.ndarray,
    x0_probs: np.ndarray,
    q_t: np.ndarray,
    q_bar_prev: np.ndarray,
    t: int,
) -> np.ndarray:
    """posterior() applied to a batch of variables sharing the same matrices.

    states: (k,) current one-hot argmax states; x0_probs: (k, d).  Returns a
    (k, d) row-stochastic array; algebraically identical to the scalar form.
    """
    x0_probs = np.asarray(x0_probs, dtype=np.float64)
    if t == 1:
        return x0_probs / x0_probs.sum(axis=1, keepdims=True)
    left = q_t[:, states].T  # (k, d): q(x^t = state_k | x^{t-1} = j)
    norms = left @ q_bar_prev.T  # (k, d0): normalizer per clean state i0
    bad = (norms <= 0) & (x0_probs > 0)
    if np.any(bad):
        k = int(np.argwhere(bad)[0, 0])
        raise ImpossibleStateError(
            f"zero posterior normalizer at t={t}, x_t state {int(states[k])}"
        )
    weights = np.where(norms > 0, x0_probs / np.where(norms > 0, norms, 1.0), 0.0)
    mixed = (weights @ q_bar_prev) * left
    return mixed / mixed.sum(axis=1, keepdims=True)


DenoiseFn = Callable[[NoisyGraph], tuple[np.ndarray, np.ndarray]]


def sample_graph(
    denoise_fn: DenoiseFn,
    model: NoiseModel,
    n_nodes: int,
    rng: np.random.Generator,
) -> CellGraph:
    """Draw G^T from the limit distribution and run T reverse steps.

    denoise_fn maps a noisy graph to (node_probs (n, b), edge_probs
    (n, n, EDGE_STATES)): the predicted clean-graph distributions.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    n = n_nodes
    node_probs = np.tile(model.m_x, (n, 1))
    edge_probs = np.tile(model.m_e, (n, n, 1))
    g = _resample_graph(node_probs, edge_probs, model.T, rng)
    iu, ju = np.triu_indices(n, k=1)
    for t in range(model.T, 0, -1):
        pred_nodes, pred_edges = denoise_fn(g)
        next_nodes = posterior_batch(
            g.node_states(), pred_nodes, model.q_x(t), model.q_bar_x(t - 1), t
        )
        next_edges = np.empty((n, n, EDGE_STATES))
        next_edges[:, :, 0] = 1.0
        next_edges[:, :, 1:] = 0.0
        if iu.size:
            upper = posterior_batch(
                g.edge_states()[iu, ju],
                pred_edges[iu, ju],
                model.q_e(t),
                model.q_bar_e(t - 1),
                t,
            )
            next_edges[iu, ju] = upper
            next_edges[ju, iu] = upper
        g = _resample_graph(next_nodes, next_edges, t - 1, rng)
    return g.to_cell_graph()


def sample_node_count(training_sizes: Sequence[int], rng: np.random.Generator) -> int:
    """Draw a graph size from the empirical distribution of training sizes."""
    sizes = np.asarray(list(training_sizes), dtype=np.int64)
    if sizes.size == 0:
        raise ValueError("empty training size multiset")
    return int(rng.choice(sizes))


def sample_dataset(
    denoise_fn: DenoiseFn,
    model: NoiseModel,
    training_sizes: Sequence[int],
    n_graphs: int,
    rng: np.random.Generator,
    types: Optional[CellTypes] = None,
    provenance: str = "diffusion",
) -> GraphDataset:
    """n_graphs reverse-process samples with sizes drawn from the training set."""
    graphs = []
    for _ in range(n_graphs):
        n_nodes = sample_node_count(training_sizes, rng)
        graphs.append(sample_graph(denoise_fn, model, n_nodes, rng))
    return GraphDataset(tuple(graphs), None, provenance, types or CellTypes(b=model.b))
