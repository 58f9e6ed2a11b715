"""Scratch: tune the shared-account synthetic experiment (criteria 6/7)."""

import sys
import time

import numpy as np

from dagcn.data import SyntheticSpec, generate_synthetic, split_sequences
from dagcn.evaluation import evaluate, evaluate_popularity, popularity_baseline
from dagcn.graph import GraphOptions, build_cds_graph
from dagcn.model import ModelConfig
from dagcn.training import TrainConfig, train

D = int(sys.argv[1]) if len(sys.argv) > 1 else 32
LR = float(sys.argv[2]) if len(sys.argv) > 2 else 0.005
EPOCHS = int(sys.argv[3]) if len(sys.argv) > 3 else 15
SEEDS = [0, 1, 2]

res = {"h2": [], "h1": [], "os": [], "pop": [], "h2_r20": [], "os_r20": []}
for seed in SEEDS:
    t0 = time.time()
    spec = SyntheticSpec(
        n_accounts=200, personas_per_account=2, clusters_per_domain=4,
        items_per_domain=300, seq_len=30, noise_rate=0.1, rng_seed=seed,
    )
    vocab, seqs, _ = generate_synthetic(spec)
    train_seqs, valid_seqs, test_seqs = split_sequences(seqs, rng_seed=seed)
    graph = build_cds_graph(train_seqs, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b)
    graph_os = build_cds_graph(
        train_seqs, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b,
        GraphOptions(include_sequential_edges=False),
    )
    tc = TrainConfig(lr=LR, batch_size=128, max_epochs=EPOCHS, patience=5, rng_seed=seed)

    for name, g, h in (("h2", graph, 2), ("h1", graph, 1), ("os", graph_os, 2)):
        cfg = ModelConfig(embed_dim=D, latent_users=h, rounds=1)
        r = train(train_seqs, valid_seqs, g, cfg, tc)
        rep = evaluate(r.params, cfg, g, test_seqs)
        r5 = (rep.domain_a.recall5 * rep.domain_a.n + rep.domain_b.recall5 * rep.domain_b.n) / (
            rep.domain_a.n + rep.domain_b.n
        )
        r20 = (rep.domain_a.recall20 * rep.domain_a.n + rep.domain_b.recall20 * rep.domain_b.n) / (
            rep.domain_a.n + rep.domain_b.n
        )
        res[name].append(r5)
        if name in ("h2", "os"):
            res[name + "_r20"].append(r20)
        print(f"  seed {seed} {name}: R@5={r5:.4f} R@20={r20:.4f} best_ep={r.best_epoch} ({time.time()-t0:.0f}s)")

    pop = popularity_baseline(train_seqs, vocab.n_items_a, vocab.n_items_b)
    prep = evaluate_popularity(pop, test_seqs)
    p5 = (prep.domain_a.recall5 * prep.domain_a.n + prep.domain_b.recall5 * prep.domain_b.n) / (
        prep.domain_a.n + prep.domain_b.n
    )
    res["pop"].append(p5)
    print(f"  seed {seed} pop: R@5={p5:.4f}  total {time.time()-t0:.0f}s")

print(f"\nmeans: H2={np.mean(res['h2']):.4f} H1={np.mean(res['h1']):.4f} "
      f"POP={np.mean(res['pop']):.4f} | R20 full={np.mean(res['h2_r20']):.4f} OS={np.mean(res['os_r20']):.4f}")
print(f"H2 >= H1: {np.mean(res['h2']) >= np.mean(res['h1'])}")
print(f"H2 - POP: {np.mean(res['h2']) - np.mean(res['pop']):.4f} (need >= 0.10)")
print(f"full R20 >= OS R20: {np.mean(res['h2_r20']) >= np.mean(res['os_r20'])}")
