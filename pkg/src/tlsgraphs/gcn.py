"""Downstream task: a 2-layer graph convolutional network classifying high vs
low TLS content, with the data-augmentation protocol, hyperparameter grid,
stratified cross-validation, early stopping, and AUROC reporting.

Graphs are padded into batched tensors once; training is full-batch gradient
descent with hand-written backprop (the architecture is small and fixed, and
this keeps a 1260-fit grid affordable on a CPU).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graphs import CellGraph, GraphDataset
from .rng import child_rng

LABEL_TO_Y = {"non_tls": 0.0, "tls": 1.0}


@dataclass(frozen=True)
class GcnHyperparams:
    learning_rate: float
    hidden_dim: int
    dropout: float


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol knobs; the grid defaults are the full published grid."""

    sources: tuple[str, ...] = ("real", "diffusion", "baseline")
    magnitudes: tuple[int, ...] = (1, 2, 3, 5, 10, 20, 40)
    learning_rates: tuple[float, ...] = (0.01, 0.001, 0.0001)
    hidden_dims: tuple[int, ...] = (8, 16)
    dropouts: tuple[float, ...] = (0.2, 0.5)
    max_epochs: int = 5000
    patience: int = 100
    folds: int = 5
    seed: int = 0

    def grid(self) -> list[GcnHyperparams]:
        return [
            GcnHyperparams(lr, d, p)
            for lr in self.learning_rates
            for d in self.hidden_dims
            for p in self.dropouts
        ]


@dataclass
class GcnParams:
    """Two convolution weight matrices plus the mean-pooled readout."""

    w1: np.ndarray  # (b, d)
    w2: np.ndarray  # (d, d)
    w_out: np.ndarray  # (d,)
    b_out: float

    @classmethod
    def init(cls, b: int, hidden_dim: int, rng: np.random.Generator) -> "GcnParams":
        return cls(
            w1=rng.uniform(-1, 1, size=(b, hidden_dim)) / np.sqrt(b),
            w2=rng.uniform(-1, 1, size=(hidden_dim, hidden_dim)) / np.sqrt(hidden_dim),
            w_out=rng.uniform(-1, 1, size=hidden_dim) / np.sqrt(hidden_dim),
            b_out=0.0,
        )

    def copy(self) -> "GcnParams":
        return GcnParams(self.w1.copy(), self.w2.copy(), self.w_out.copy(), self.b_out)


@dataclass(frozen=True)
class EncodedGraphs:
    """Padded batch: symmetric-normalized adjacency with self-loops, one-hot
    features, and a node mask."""

    a_hat: np.ndarray  # (G, N, N)
    x: np.ndarray  # (G, N, b)
    mask: np.ndarray  # (G, N)
    n_nodes: np.ndarray  # (G,)

    def __len__(self) -> int:
        return self.a_hat.shape[0]

    def subset(self, idx: Sequence[int]) -> "EncodedGraphs":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedGraphs(self.a_hat[idx], self.x[idx], self.mask[idx], self.n_nodes[idx])


def encode_graphs(graphs: Sequence[CellGraph], b: int, pad_to: Optional[int] = None) -> EncodedGraphs:
    sizes = np.array([g.n for g in graphs], dtype=np.int64)
    n_max = int(pad_to or sizes.max())
    count = len(graphs)
    a_hat = np.zeros((count, n_max, n_max))
    x = np.zeros((count, n_max, b))
    mask = np.zeros((count, n_max))
    for gi, g in enumerate(graphs):
        a = g.adjacency().astype(np.float64) + np.eye(g.n)
        d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
        a_hat[gi, : g.n, : g.n] = a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
        x[gi, np.arange(g.n), g.node_types] = 1.0
        mask[gi, : g.n] = 1.0
    return EncodedGraphs(a_hat, x, mask, sizes)


def _forward(
    params: GcnParams,
    enc: EncodedGraphs,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
):
    """Batched forward pass; returns logits and the cache for backprop.

    Dropout sits between the two convolutions and is active only when an rng
    is supplied (inverted scaling, so evaluation needs no rescale).
    """
    z1 = enc.a_hat @ (enc.x @ params.w1)
    h1 = np.maximum(z1, 0.0)
    if rng is not None and dropout_rate > 0.0:
        keep = (rng.random(h1.shape) >= dropout_rate) / (1.0 - dropout_rate)
    else:
        keep = np.ones_like(h1)
    h1d = h1 * keep
    z2 = enc.a_hat @ (h1d @ params.w2)
    h2 = np.maximum(z2, 0.0)
    pool_w = enc.mask / enc.n_nodes[:, None]
    pooled = (pool_w[:, None, :] @ h2)[:, 0, :]
    logits = pooled @ params.w_out + params.b_out
    cache = (z1, h1, keep, h1d, z2, h2, pool_w, pooled)
    return logits, cache


def gcn_forward(
    params: GcnParams,
    graph: CellGraph,
    b: int,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Probability that one graph has high TLS content; permutation-invariant,
    deterministic when dropout is off."""
    enc = encode_graphs([graph], b)
    logits, _ = _forward(params, enc, dropout_rate, rng)
    return float(1.0 / (1.0 + np.exp(-logits[0])))


def _backward(params: GcnParams, enc: EncodedGraphs, cache, logits, y: np.ndarray):
    z1, h1, keep, h1d, z2, h2, pool_w, pooled = cache
    count = y.shape[0]
    probs = 1.0 / (1.0 + np.exp(-logits))
    d_logits = (probs - y) / count
    g_w_out = pooled.T @ d_logits
    g_b_out = float(d_logits.sum())
    d_pooled = np.outer(d_logits, params.w_out)
    d_h2 = d_pooled[:, None, :] * pool_w[:, :, None]
    d_z2 = d_h2 * (z2 > 0)
    ah_dz2 = enc.a_hat @ d_z2  # a_hat is symmetric
    hidden = h1d.shape[-1]
    g_w2 = h1d.reshape(-1, hidden).T @ ah_dz2.reshape(-1, hidden)
    d_h1d = ah_dz2 @ params.w2.T
    d_h1 = d_h1d * keep
    d_z1 = d_h1 * (z1 > 0)
    ah_dz1 = enc.a_hat @ d_z1
    g_w1 = enc.x.reshape(-1, enc.x.shape[-1]).T @ ah_dz1.reshape(-1, hidden)
    return g_w1, g_w2, g_w_out, g_b_out


def bce_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))


def auroc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative; ties
    count one half (average-rank formulation)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    rank = 1
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (rank + rank + (j - i))
        rank += j - i + 1
        i = j + 1
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class FitResult:
    params: GcnParams
    best_epoch: int
    epochs_run: int
    val_bce: float
    val_auroc: float


def train_gcn(
    enc_train: EncodedGraphs,
    y_train: np.ndarray,
    enc_val: EncodedGraphs,
    y_val: np.ndarray,
    hp: GcnHyperparams,
    b: int,
    rng: np.random.Generator,
    max_epochs: int = 5000,
    patience: int = 100,
) -> FitResult:
    """One full-batch Adam step per epoch, early-stopped on validation
    cross-entropy (stop after `patience` epochs without improvement, keep the
    best-epoch parameters)."""
    params = GcnParams.init(b, hp.hidden_dim, rng)
    moments = [np.zeros_like(params.w1), np.zeros_like(params.w2), np.zeros_like(params.w_out), 0.0]
    second = [np.zeros_like(params.w1), np.zeros_like(params.w2), np.zeros_like(params.w_out), 0.0]
    best = params.copy()
    best_bce = np.inf
    best_epoch = 0
    since_best = 0
    epoch = 0
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for epoch in range(1, max_epochs + 1):
        logits, cache = _forward(params, enc_train, hp.dropout, rng)
        grads = _backward(params, enc_train, cache, logits, y_train)
        for k, g in enumerate(grads):
            moments[k] = beta1 * moments[k] + (1 - beta1) * g
            second[k] = beta2 * second[k] + (1 - beta2) * np.square(g)
            m_hat = moments[k] / (1 - beta1**epoch)
            v_hat = second[k] / (1 - beta2**epoch)
            update = hp.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
            if k == 0:
                params.w1 -= update
            elif k == 1:
                params.w2 -= update
            elif k == 2:
                params.w_out -= update
            else:
                params.b_out -= float(update)
        val_logits, _ = _forward(params, enc_val)
        val_bce = bce_from_logits(val_logits, y_val)
        if val_bce < best_bce - 1e-12:
            best_bce = val_bce
            best = params.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= patience:
                break
    val_logits, _ = _forward(best, enc_val)
    return FitResult(
        params=best,
        best_epoch=best_epoch,
        epochs_run=epoch,
        val_bce=best_bce,
        val_auroc=auroc(val_logits, y_val.astype(int)),
    )


def stratified_folds(labels: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Index folds preserving the class ratio within one graph per fold."""
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        idx = idx[rng.permutation(idx.size)]
        for pos, i in enumerate(idx):
            folds[pos % k].append(int(i))
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


@dataclass(frozen=True)
class ExperimentCell:
    source: str
    magnitude: int
    best_hp: GcnHyperparams
    val_mean: float
    val_sem: float
    test_mean: float
    test_sem: float


@dataclass(frozen=True)
class ExperimentResult:
    cells: tuple[ExperimentCell, ...]

    def cell(self, source: str, magnitude: int) -> ExperimentCell:
        for c in self.cells:
            if c.source == source and c.magnitude == magnitude:
                return c
        raise KeyError((source, magnitude))


def _labels_array(dataset: GraphDataset) -> np.ndarray:
    if dataset.labels is None:
        raise ValueError("labeled dataset required")
    return np.array([LABEL_TO_Y[l] for l in dataset.labels])


def split_balanced_halves(
    dataset: GraphDataset, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced, equally sized train/test index split (stratified by label)."""
    y = _labels_array(dataset)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in (0.0, 1.0):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(idx.size)]
        half = idx.size // 2
        train_idx.extend(idx[:half])
        test_idx.extend(idx[half:])
    return np.sort(np.array(train_idx)), np.sort(np.array(test_idx))


def run_experiment(
    real_small: GraphDataset,
    pools: dict[str, GraphDataset],
    config: ExperimentConfig,
) -> ExperimentResult:
    """The full augmentation study.

    The labeled task set is split into balanced train/test halves; for each
    (source, magnitude) the training folds alone are augmented class-balanced
    from that source's labeled pool, hyperparameters are grid-searched by mean
    validation AUROC over stratified folds (validation is always real data),
    and the fold models of the winning configuration are evaluated on the
    held-out test half.  At magnitude 1 no pool graph is touched, so every
    source reports identical numbers.
    """
    b = real_small.types.b
    y_all = _labels_array(real_small)
    split_rng = child_rng(config.seed, "experiment-split")
    train_idx, test_idx = split_balanced_halves(real_small, split_rng)
    all_graphs = list(real_small.graphs)
    pad_to = max(
        max(g.n for g in all_graphs),
        max((g.n for ds in pools.values() for g in ds.graphs), default=1),
    )
    enc_real = encode_graphs(all_graphs, b, pad_to)
    enc_test = enc_real.subset(test_idx)
    y_test = y_all[test_idx]
    y_train_all = y_all[train_idx]
    fold_rng = child_rng(config.seed, "experiment-folds")
    folds = stratified_folds(y_train_all, config.folds, fold_rng)

    pool_enc: dict[str, dict[float, EncodedGraphs]] = {}
    for source, ds in pools.items():
        y_pool = _labels_array(ds)
        enc_pool = encode_graphs(list(ds.graphs), b, pad_to)
        pool_enc[source] = {
            0.0: enc_pool.subset(np.nonzero(y_pool == 0.0)[0]),
            1.0: enc_pool.subset(np.nonzero(y_pool == 1.0)[0]),
        }

    def _concat(encs: list[EncodedGraphs]) -> EncodedGraphs:
        return EncodedGraphs(
            np.concatenate([e.a_hat for e in encs]),
            np.concatenate([e.x for e in encs]),
            np.concatenate([e.mask for e in encs]),
            np.concatenate([e.n_nodes for e in encs]),
        )

    cells = []
    for source in config.sources:
        for magnitude in config.magnitudes:
            per_config: list[tuple[GcnHyperparams, float, list[FitResult]]] = []
            for hp in config.grid():
                fits = []
                for fold_id, val_local in enumerate(folds):
                    train_local = np.concatenate(
                        [folds[f] for f in range(config.folds) if f != fold_id]
                    )
                    fit_train = [enc_real.subset(train_idx[train_local])]
                    fit_y = [y_train_all[train_local]]
                    if magnitude > 1:
                        per_class = (magnitude - 1) * train_local.size // 2
                        for cls in (0.0, 1.0):
                            pool = pool_enc[source][cls]
                            if per_class > len(pool):
                                raise ValueError(
                                    f"pool exhausted: source {source!r} class {cls} "
                                    f"needs {per_class}, has {len(pool)}"
                                )
                            draw_rng = child_rng(
                                config.seed, f"pool:{source}:m{magnitude}:f{fold_id}:c{cls}"
                            )
                            pick = draw_rng.permutation(len(pool))[:per_class]
                            fit_train.append(pool.subset(pick))
                            fit_y.append(np.full(per_class, cls))
                    fit_rng = child_rng(
                        config.seed,
                        f"fit:m{magnitude}:f{fold_id}:lr{hp.learning_rate}"
                        f":h{hp.hidden_dim}:p{hp.dropout}",
                    )
                    fits.append(
                        train_gcn(
                            _concat(fit_train),
                            np.concatenate(fit_y),
                            enc_real.subset(train_idx[val_local]),
                            y_train_all[val_local],
                            hp,
                            b,
                            fit_rng,
                            config.max_epochs,
                            config.patience,
                        )
                    )
                per_config.append((hp, float(np.mean([f.val_auroc for f in fits])), fits))
            # ties broken toward smaller learning rate, then smaller hidden dim
            best_hp, _, best_fits = max(
                per_config,
                key=lambda item: (
                    item[1],
                    -item[0].learning_rate,
                    -item[0].hidden_dim,
                    -item[0].dropout,
                ),
            )
            val_scores = np.array([f.val_auroc for f in best_fits])
            test_scores = np.array(
                [
                    auroc(_forward(f.params, enc_test)[0], y_test.astype(int))
                    for f in best_fits
                ]
            )
            sem = lambda v: float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            cells.append(
                ExperimentCell(
                    source=source,
                    magnitude=magnitude,
                    best_hp=best_hp,
                    val_mean=float(val_scores.mean()),
                    val_sem=sem(val_scores),
                    test_mean=float(test_scores.mean()),
                    test_sem=sem(test_scores),
                )
            )
    return ExperimentResult(tuple(cells))
