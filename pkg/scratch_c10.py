"""Dry run of the directional distribution-comparison pipeline (criterion 10)."""
import time

import numpy as np

from tlsgraphs.tissue import TissueParams, build_corpus
from tlsgraphs.diffusion import NoiseModel, NoiseSchedule, estimate_marginals, sample_dataset
from tlsgraphs.denoiser import DenoiserConfig, make_denoise_fn
from tlsgraphs.training import TrainConfig, train
from tlsgraphs.baseline import fit as fit_baseline, sample_dataset as baseline_sample
from tlsgraphs.embedding import embed_dataset
from tlsgraphs.metrics import EmbeddingPopulation, mmd
from tlsgraphs.rng import child_rng

t0 = time.time()
params = TissueParams(rng_seed=777)
tls, non = build_corpus(params, size_bounds=(20, 40), n_fields=40)
print(f"corpus: tls={len(tls)} non={len(non)} ({time.time()-t0:.0f}s)", flush=True)
tls_graphs = tls.graphs[:500]
from tlsgraphs.graphs import GraphDataset
train_set = GraphDataset(tls_graphs, None, "real-sim", tls.types)

m_x, m_e = estimate_marginals(train_set)
print("m_x:", np.round(m_x, 3), "m_e:", np.round(m_e, 4), flush=True)
model = NoiseModel(m_x=m_x, m_e=m_e, schedule=NoiseSchedule.cosine(50))

t0 = time.time()
cfg = TrainConfig(steps=3000, batch_size=2, seed=123)
result = train(train_set, model, cfg)
print(f"train: {time.time()-t0:.0f}s  loss[0:50]={np.mean(result.losses[:50]):.3f} "
      f"loss[-100:]={np.mean(result.losses[-100:]):.3f}", flush=True)

t0 = time.time()
sizes = [g.n for g in train_set.graphs]
fn = make_denoise_fn(result.params, model.T)
gen = sample_dataset(fn, model, sizes, 500, child_rng(9, "gen"), train_set.types)
print(f"sample diffusion: {time.time()-t0:.0f}s", flush=True)

bl = fit_baseline(train_set)
gen_bl = baseline_sample(bl, 500, child_rng(9, "gen-bl"))

pop_train = EmbeddingPopulation.from_embeddings(embed_dataset(train_set))
pop_diff = EmbeddingPopulation.from_embeddings(embed_dataset(gen))
pop_bl = EmbeddingPopulation.from_embeddings(embed_dataset(gen_bl))
print(f"population sizes: train={len(pop_train)} diff={len(pop_diff)} baseline={len(pop_bl)}")
wins = 0
for a in range(3):
    m_d = mmd(pop_diff.dimension(a), pop_train.dimension(a))
    m_b = mmd(pop_bl.dimension(a), pop_train.dimension(a))
    win = m_d < m_b
    wins += win
    print(f"kappa({a}): MMD diffusion={m_d:.4f} baseline={m_b:.4f} win={win}", flush=True)
print("wins:", wins, "of 3")
for a in range(3):
    print(f"kappa({a}) means: train={pop_train.dimension(a).mean():.3f} diff={pop_diff.dimension(a).mean():.3f} bl={pop_bl.dimension(a).mean():.3f}")
