"""Leave-last-out next-item evaluation: MRR@K / Recall@K per domain over the
full vocabulary, deterministic tie-breaking, and the popularity baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DOMAIN_A, DOMAIN_B, DOMAINS, HybridSequence, ItemRef
from .errors import DataError
from .graph import CdsGraph
from .model import (
    GraphArrays,
    ModelConfig,
    ModelParams,
    NodeReps,
    NoContextError,
    propagate,
    score_domain,
    sequence_embedding,
)


def leave_last_out(
    sequence: HybridSequence, domain: str
) -> tuple[list[ItemRef], int] | None:
    """(history up to the domain's last event, that event's item index).

    None ("no target") when the domain never occurs, or its last event is the
    sequence's very first event.
    """
    pos = None
    for i, ev in enumerate(sequence.events):
        if ev.domain == domain:
            pos = i
    if pos is None or pos == 0:
        return None
    return sequence.events[:pos], sequence.events[pos].index


def rank_of_target(scores: np.ndarray, target: int) -> int:
    """1-based rank with deterministic ties: equal scores order by index."""
    scores = np.asarray(scores)
    s = scores[target]
    greater = int(np.sum(scores > s))
    tied_before = int(np.sum(scores[:target] == s))
    return 1 + greater + tied_before


def mrr_at_k(rank: int, k: int) -> float:
    return 1.0 / rank if rank <= k else 0.0


def recall_at_k(rank: int, k: int) -> float:
    return 1.0 if rank <= k else 0.0


@dataclass
class DomainMetrics:
    mrr5: float
    mrr20: float
    recall5: float
    recall20: float
    n: int

    def to_dict(self) -> dict:
        return {
            "mrr5": self.mrr5,
            "mrr20": self.mrr20,
            "recall5": self.recall5,
            "recall20": self.recall20,
            "n": self.n,
        }


@dataclass
class MetricsReport:
    domain_a: DomainMetrics
    domain_b: DomainMetrics
    meta: dict

    def to_dict(self) -> dict:
        return {
            "domain_A": self.domain_a.to_dict(),
            "domain_B": self.domain_b.to_dict(),
            "meta": self.meta,
        }

    def domain(self, domain: str) -> DomainMetrics:
        return self.domain_a if domain == DOMAIN_A else self.domain_b


def metrics_from_ranks(ranks: Sequence[int]) -> DomainMetrics:
    if not ranks:
        return DomainMetrics(0.0, 0.0, 0.0, 0.0, 0)
    r = np.asarray(ranks, dtype=np.float64)
    return DomainMetrics(
        mrr5=float(np.mean(np.where(r <= 5, 1.0 / r, 0.0))),
        mrr20=float(np.mean(np.where(r <= 20, 1.0 / r, 0.0))),
        recall5=float(np.mean(r <= 5)),
        recall20=float(np.mean(r <= 20)),
        n=len(ranks),
    )


def pooled_metrics(ranks: dict[str, list[int]], k: int) -> tuple[float, float]:
    """(MRR@k, Recall@k) over all evaluated (sequence, domain) pairs."""
    merged = ranks[DOMAIN_A] + ranks[DOMAIN_B]
    if not merged:
        return 0.0, 0.0
    r = np.asarray(merged, dtype=np.float64)
    return (
        float(np.mean(np.where(r <= k, 1.0 / r, 0.0))),
        float(np.mean(r <= k)),
    )


def evaluate_ranks(
    params: ModelParams,
    config: ModelConfig,
    graph: CdsGraph,
    sequences: Sequence[HybridSequence],
    arrays: GraphArrays | None = None,
    reps: NodeReps | None = None,
) -> dict[str, list[int]]:
    """Target ranks per domain; skips (sequence, domain) pairs without a
    target or without in-domain history."""
    params.validate_shapes(config, graph.n_accounts, graph.n_items[DOMAIN_A], graph.n_items[DOMAIN_B])
    if reps is None:
        reps = propagate(graph, params, config, arrays=arrays)
    ranks: dict[str, list[int]] = {DOMAIN_A: [], DOMAIN_B: []}
    for seq in sequences:
        for domain in DOMAINS:
            split = leave_last_out(seq, domain)
            if split is None:
                continue
            history, target = split
            try:
                emb = sequence_embedding(history, domain, reps, seq.account, config)
            except NoContextError:
                continue
            scores = score_domain(emb, domain, params)
            ranks[domain].append(rank_of_target(scores, target))
    return ranks


def evaluate(
    params: ModelParams,
    config: ModelConfig,
    graph: CdsGraph,
    sequences: Sequence[HybridSequence],
    arrays: GraphArrays | None = None,
    meta: dict | None = None,
) -> MetricsReport:
    """Propagate once on the training graph, rank every test target."""
    if not sequences:
        raise DataError("nothing to evaluate")
    ranks = evaluate_ranks(params, config, graph, sequences, arrays=arrays)
    return MetricsReport(
        domain_a=metrics_from_ranks(ranks[DOMAIN_A]),
        domain_b=metrics_from_ranks(ranks[DOMAIN_B]),
        meta=meta or {},
    )


# ---------------------------------------------------------------------------
# Popularity baseline
# ---------------------------------------------------------------------------


def popularity_baseline(
    train_seqs: Sequence[HybridSequence], n_items_a: int, n_items_b: int
) -> dict[str, np.ndarray]:
    """Items ordered by training interaction frequency, ties by index.

    Unseen items carry frequency 0 and therefore rank after all seen items.
    """
    if not train_seqs:
        raise DataError("no sequences")
    sizes = {DOMAIN_A: n_items_a, DOMAIN_B: n_items_b}
    orderings = {}
    for domain in DOMAINS:
        counts = np.zeros(sizes[domain], dtype=np.int64)
        for seq in train_seqs:
            for ev in seq.events:
                if ev.domain == domain:
                    counts[ev.index] += 1
        orderings[domain] = np.lexsort((np.arange(sizes[domain]), -counts))
    return orderings


def evaluate_popularity(
    orderings: dict[str, np.ndarray], sequences: Sequence[HybridSequence]
) -> MetricsReport:
    """Rank targets by the fixed popularity order, same skip rule as the
    model evaluation so the two reports cover the same cases."""
    if not sequences:
        raise DataError("nothing to evaluate")
    position = {}
    for domain in DOMAINS:
        pos = np.empty(len(orderings[domain]), dtype=np.int64)
        pos[orderings[domain]] = np.arange(1, len(orderings[domain]) + 1)
        position[domain] = pos
    ranks: dict[str, list[int]] = {DOMAIN_A: [], DOMAIN_B: []}
    for seq in sequences:
        for domain in DOMAINS:
            split = leave_last_out(seq, domain)
            if split is None:
                continue
            history, target = split
            if not any(e.domain == domain for e in history):
                continue
            ranks[domain].append(int(position[domain][target]))
    return MetricsReport(
        domain_a=metrics_from_ranks(ranks[DOMAIN_A]),
        domain_b=metrics_from_ranks(ranks[DOMAIN_B]),
        meta={"baseline": "popularity"},
    )
