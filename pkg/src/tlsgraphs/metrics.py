"""Two-sample statistics between TLS-embedding populations.

Four metrics per embedding dimension, mirroring the comparison-table layout:
Kolmogorov-Smirnov statistic, order-1 Wasserstein distance, Jensen-Shannon
divergence on fixed [0, 1] histograms (base-2 logs), and the unbiased
squared-MMD estimator with a Gaussian kernel and median-heuristic bandwidth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import EMBEDDING_DIM, TlsEmbedding

METRIC_NAMES = ("KS", "WD", "D_JS", "MMD")
JS_BINS = 32


def _as_samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("empty sample")
    return x


def ks_statistic(x, y) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: the sup-norm distance between
    the empirical CDFs (no p-value)."""
    x, y = np.sort(_as_samples(x)), np.sort(_as_samples(y))
    grid = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, grid, side="right") / x.size
    cdf_y = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(cdf_x - cdf_y)))


def wasserstein_1d(x, y) -> float:
    """Order-1 Wasserstein distance via the CDF-difference integral."""
    x, y = np.sort(_as_samples(x)), np.sort(_as_samples(y))
    grid = np.sort(np.concatenate([x, y]))
    deltas = np.diff(grid)
    cdf_x = np.searchsorted(x, grid[:-1], side="right") / x.size
    cdf_y = np.searchsorted(y, grid[:-1], side="right") / y.size
    return float(np.sum(np.abs(cdf_x - cdf_y) * deltas))


def js_divergence(x, y, bins: int = JS_BINS) -> float:
    """Jensen-Shannon divergence between histograms on the shared range [0, 1]
    with `bins` equal-width bins; base-2 logs so the range is [0, 1]."""
    x, y = _as_samples(x), _as_samples(y)
    p, _ = np.histogram(x, bins=bins, range=(0.0, 1.0))
    q, _ = np.histogram(y, bins=bins, range=(0.0, 1.0))
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a, mm):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / mm[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def mmd(x, y) -> float:
    """Unbiased squared-MMD estimator with a Gaussian RBF kernel.

    Bandwidth is the median pairwise distance over the pooled sample; when all
    points coincide the bandwidth is 0 and the statistic is defined as 0.  The
    unbiased estimator can dip slightly below zero.
    """
    x, y = _as_samples(x), _as_samples(y)
    if x.size < 2 or y.size < 2:
        raise ValueError("mmd needs at least 2 points per sample")
    pooled = np.concatenate([x, y])
    diffs = np.abs(pooled[:, None] - pooled[None, :])
    iu = np.triu_indices(pooled.size, k=1)
    bandwidth = float(np.median(diffs[iu]))
    if bandwidth == 0.0:
        return 0.0
    gamma = 1.0 / (2.0 * bandwidth * bandwidth)

    def k(a, b):
        return np.exp(-gamma * (a[:, None] - b[None, :]) ** 2)

    m, n = x.size, y.size
    kxx = k(x, x)
    kyy = k(y, y)
    kxy = k(x, y)
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


@dataclass(frozen=True)
class EmbeddingPopulation:
    """Per-dimension sample columns extracted from a set of TLS embeddings."""

    values: np.ndarray  # (n_samples, EMBEDDING_DIM)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64).reshape(-1, EMBEDDING_DIM)
        object.__setattr__(self, "values", v)
        if v.shape[0] == 0:
            raise ValueError("empty population")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("embedding values must lie in [0, 1]")

    @classmethod
    def from_embeddings(
        cls, embeddings: list[TlsEmbedding], include_degenerate: bool = False
    ) -> "EmbeddingPopulation":
        rows = [
            e.as_array() for e in embeddings if include_degenerate or not e.degenerate
        ]
        if not rows:
            raise ValueError("no non-degenerate embeddings in population")
        return cls(np.stack(rows))

    def dimension(self, a: int) -> np.ndarray:
        return self.values[:, a]

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class ComparisonReport:
    """4 metrics x 6 embedding dimensions, plus sample-size metadata."""

    table: dict[str, tuple[float, ...]]  # metric name -> per-dimension values
    n_p: int
    n_q: int

    def value(self, metric: str, a: int) -> float:
        return self.table[metric][a]

    def to_rows(self) -> list[tuple[str, int, float]]:
        return [
            (metric, a, self.table[metric][a])
            for metric in METRIC_NAMES
            for a in range(EMBEDDING_DIM)
        ]


_METRIC_FNS = {
    "KS": ks_statistic,
    "WD": wasserstein_1d,
    "D_JS": js_divergence,
    "MMD": mmd,
}


def compare_populations(p: EmbeddingPopulation, q: EmbeddingPopulation) -> ComparisonReport:
    """All four metrics on each embedding dimension independently."""
    table = {
        metric: tuple(fn(p.dimension(a), q.dimension(a)) for a in range(EMBEDDING_DIM))
        for metric, fn in _METRIC_FNS.items()
    }
    return ComparisonReport(table=table, n_p=len(p), n_q=len(q))
