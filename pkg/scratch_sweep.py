"""Scratch: zipf-exponent sweep for the criterion 6/7 geometry (paired seeds)."""

import sys
import time

import numpy as np

import dagcn.data as dd
from dagcn.data import SyntheticSpec, generate_synthetic, split_sequences
from dagcn.evaluation import evaluate, evaluate_popularity, popularity_baseline
from dagcn.graph import GraphOptions, build_cds_graph
from dagcn.model import ModelConfig
from dagcn.training import TrainConfig, train


def pooled(rep, k):
    a, b = rep.domain_a, rep.domain_b
    key = f"recall{k}"
    return (getattr(a, key) * a.n + getattr(b, key) * b.n) / (a.n + b.n)


zipfs = [float(z) for z in sys.argv[1].split(",")]
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 26
d = int(sys.argv[3]) if len(sys.argv) > 3 else 16
lr = float(sys.argv[4]) if len(sys.argv) > 4 else 0.035

for zipf in zipfs:
    dd.WITHIN_CLUSTER_ZIPF = zipf
    t0 = time.time()
    rows = []
    for seed in (0, 1, 2):
        spec = SyntheticSpec(n_accounts=200, personas_per_account=2, clusters_per_domain=4,
                             items_per_domain=300, seq_len=30, noise_rate=0.1, rng_seed=seed)
        vocab, seqs, _ = generate_synthetic(spec)
        tr, va, te = split_sequences(seqs, rng_seed=seed)
        graph = build_cds_graph(tr, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b)
        row = {}
        for name, h in (("h2", 2), ("h1", 1)):
            cfg = ModelConfig(embed_dim=d, latent_users=h, rounds=1)
            tc = TrainConfig(lr=lr, batch_size=128, max_epochs=epochs, patience=epochs, rng_seed=seed)
            r = train(tr, va, graph, cfg, tc)
            rep = evaluate(r.params, cfg, graph, te)
            row[name] = pooled(rep, 5)
            row[name + "_20"] = pooled(rep, 20)
        pop = popularity_baseline(tr, vocab.n_items_a, vocab.n_items_b)
        row["pop"] = pooled(evaluate_popularity(pop, te), 5)
        rows.append(row)
        print(f"  zipf={zipf} seed={seed}: H2={row['h2']:.3f} H1={row['h1']:.3f} "
              f"diff={row['h2']-row['h1']:+.3f} POP={row['pop']:.3f}", flush=True)
    h2 = np.mean([r["h2"] for r in rows])
    h1 = np.mean([r["h1"] for r in rows])
    pop = np.mean([r["pop"] for r in rows])
    print(f"zipf={zipf}: mean H2={h2:.3f} H1={h1:.3f} gap={h2-h1:+.3f} "
          f"margin={h2-pop:.3f} ({time.time()-t0:.0f}s)", flush=True)
