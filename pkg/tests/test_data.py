import numpy as np
import pytest

from dagcn.data import (
    DOMAIN_A,
    DOMAIN_B,
    HybridSequence,
    ItemRef,
    SyntheticSpec,
    generate_synthetic,
    parse_log,
    serialize_labels,
    serialize_log,
    split_sequences,
)
from dagcn.errors import ConfigError, DataError
from tests.conftest import RUNNING_LOG_LINE


# --- parsing ---------------------------------------------------------------


def test_parse_first_seen_indexing():
    vocab, seqs, report = parse_log(["u1\tA:x A:y B:z"])
    assert report.n_rejected == 0
    assert seqs[0].account == 0
    assert seqs[0].events == [ItemRef("A", 0), ItemRef("A", 1), ItemRef("B", 0)]


def test_parse_rejects_short_sequence():
    vocab, seqs, report = parse_log(["u1\tA:x"])
    assert seqs == []
    assert report.rejected == [(1, "too short")]
    # rejected lines do not pollute the vocabulary
    assert vocab.n_accounts == 0 and vocab.n_items_a == 0


def test_parse_running_example_interleaving():
    vocab, seqs, report = parse_log([RUNNING_LOG_LINE])
    events = seqs[0].events
    assert [e.domain for e in events] == ["A", "B", "A", "B", "B", "A", "B"]
    assert len(seqs[0].domain_events(DOMAIN_A)) == 3
    assert len(seqs[0].domain_events(DOMAIN_B)) == 4


def test_parse_unknown_tag_and_comments():
    lines = ["# comment", "", "u1\tC:x A:y", "u2\tA:x B:y"]
    vocab, seqs, report = parse_log(lines)
    assert len(seqs) == 1
    assert report.n_comments == 1
    assert len(report.rejected) == 1
    assert "unknown domain tag" in report.rejected[0][1]


def test_parse_malformed_lines_counted():
    lines = ["no-tab-here", "u1\t", "u1\tA:", "u1\tnocolon", "u2\tA:x B:y"]
    vocab, seqs, report = parse_log(lines)
    assert len(seqs) == 1
    assert report.n_rejected == 4


def test_round_trip():
    rng = np.random.default_rng(0)
    lines = []
    for k in range(20):
        toks = " ".join(
            f"{'A' if rng.random() < 0.5 else 'B'}:it{rng.integers(30)}"
            for _ in range(int(rng.integers(2, 9)))
        )
        lines.append(f"acct{k % 7}\t{toks}")
    vocab, seqs, _ = parse_log(lines)
    text = serialize_log(vocab, seqs)
    vocab2, seqs2, report2 = parse_log(text.splitlines())
    assert report2.n_rejected == 0
    assert len(seqs) == len(seqs2)
    for s1, s2 in zip(seqs, seqs2):
        assert s1.account == s2.account
        assert s1.events == s2.events


def test_vocabulary_bijective():
    vocab, seqs, _ = parse_log([RUNNING_LOG_LINE, "u2\tB:B9 A:A1"])
    for domain, n in ((DOMAIN_A, vocab.n_items_a), (DOMAIN_B, vocab.n_items_b)):
        for idx in range(n):
            raw = vocab.items[domain].decode(idx)
            assert vocab.items[domain].encode(raw) == idx


# --- synthetic generator -----------------------------------------------------


def test_synthetic_degenerate_single_cluster():
    spec = SyntheticSpec(
        n_accounts=3, personas_per_account=1, clusters_per_domain=1,
        items_per_domain=12, seq_len=10, sequences_per_account=2,
        noise_rate=0.0, rng_seed=1,
    )
    vocab, seqs, labels = generate_synthetic(spec)
    assert all(set(row) == {0} for row in labels)
    for seq in seqs:
        for ev in seq.events:
            assert 0 <= ev.index < 12


def test_synthetic_noise_one_is_uniform():
    spec = SyntheticSpec(
        n_accounts=50, personas_per_account=2, clusters_per_domain=4,
        items_per_domain=20, seq_len=50, sequences_per_account=40,
        noise_rate=1.0, rng_seed=2,
    )
    vocab, seqs, _ = generate_synthetic(spec)
    counts = np.zeros(20)
    total = 0
    for seq in seqs:
        for ev in seq.events:
            if ev.domain == DOMAIN_A:
                counts[ev.index] += 1
                total += 1
    assert total >= 10**4  # ~1e5 events across both domains
    chi2 = float(((counts - total / 20) ** 2 / (total / 20)).sum())
    # do not reject uniformity at alpha = 0.01
    assert chi2 < stats.chi2.ppf(0.99, df=19)


def test_synthetic_deterministic():
    spec = SyntheticSpec(n_accounts=5, items_per_domain=30, seq_len=12, rng_seed=7)
    v1, s1, l1 = generate_synthetic(spec)
    v2, s2, l2 = generate_synthetic(spec)
    assert serialize_log(v1, s1) == serialize_log(v2, s2)
    assert serialize_labels(l1) == serialize_labels(l2)


def test_synthetic_noise_zero_stays_in_persona_clusters():
    spec = SyntheticSpec(
        n_accounts=8, personas_per_account=2, clusters_per_domain=4,
        items_per_domain=40, seq_len=20, sequences_per_account=3,
        noise_rate=0.0, rng_seed=3,
    )
    vocab, seqs, labels = generate_synthetic(spec)
    # cluster id of an item = index // 10 given the even partition of 40 into 4
    owned = {}
    for seq, row in zip(seqs, labels):
        for ev, persona in zip(seq.events, row):
            owned.setdefault((seq.account, persona, ev.domain), set()).add(ev.index // 10)
    for clusters in owned.values():
        assert len(clusters) == 1


def test_synthetic_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(noise_rate=1.5).validate()
    with pytest.raises(ConfigError):
        SyntheticSpec(personas_per_account=3, clusters_per_domain=2).validate()
    with pytest.raises(ConfigError):
        SyntheticSpec(n_accounts=0).validate()


# --- splits ------------------------------------------------------------------


def _dummy_seqs(n):
    return [
        __import__("dagcn.data", fromlist=["HybridSequence"]).HybridSequence(
            0, [ItemRef(DOMAIN_A, 0), ItemRef(DOMAIN_A, 1)]
        )
        for _ in range(n)
    ]


def test_split_sizes_100():
    tr, va, te = split_sequences(_dummy_seqs(100), rng_seed=0)
    assert (len(tr), len(va), len(te)) == (75, 15, 10)


def test_split_tiny_n():
    tr, va, te = split_sequences(_dummy_seqs(3), rng_seed=0)
    assert (len(tr), len(va), len(te)) == (1, 1, 1)


def test_split_rejects_small_and_bad_ratios():
    with pytest.raises(DataError):
        split_sequences(_dummy_seqs(2))
    with pytest.raises(ConfigError):
        split_sequences(_dummy_seqs(10), ratios=(0.5, 0.2, 0.2))


def test_split_deterministic_and_partition():
    rng = np.random.default_rng(0)
    for n in [3, 4, 7, 10, 53, 100, 101]:
        seed = int(rng.integers(10**6))
        seqs = _dummy_seqs(n)
        # tag identity via object id
        a = split_sequences(seqs, rng_seed=seed)
        b = split_sequences(seqs, rng_seed=seed)
        for pa, pb in zip(a, b):
            assert [id(s) for s in pa] == [id(s) for s in pb]
        ids = [id(s) for part in a for s in part]
        assert sorted(ids) == sorted(id(s) for s in seqs)
        assert all(len(part) >= 1 for part in a)
