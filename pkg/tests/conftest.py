import numpy as np
import pytest

from dagcn.data import DOMAIN_A, DOMAIN_B, HybridSequence, ItemRef, parse_log
from dagcn.graph import build_cds_graph

# The seven-event interleaved sequence used as the worked example throughout.
RUNNING_LOG_LINE = "u1\tA:A1 B:B1 A:A2 B:B2 B:B3 A:A3 B:B4"


@pytest.fixture
def running_example():
    """(vocab, sequences, graph) for the single worked-example sequence."""
    vocab, seqs, report = parse_log([RUNNING_LOG_LINE])
    assert report.n_rejected == 0
    graph = build_cds_graph(seqs, vocab.n_accounts, vocab.n_items_a, vocab.n_items_b)
    return vocab, seqs, graph


def random_corpus(rng, n_accounts, n_items_a, n_items_b, n_seqs, seq_len):
    """Uniform random hybrid sequences for property tests."""
    seqs = []
    for _ in range(n_seqs):
        account = int(rng.integers(n_accounts))
        events = []
        for _ in range(seq_len):
            if rng.random() < 0.5:
                events.append(ItemRef(DOMAIN_A, int(rng.integers(n_items_a))))
            else:
                events.append(ItemRef(DOMAIN_B, int(rng.integers(n_items_b))))
        seqs.append(HybridSequence(account, events))
    return seqs
