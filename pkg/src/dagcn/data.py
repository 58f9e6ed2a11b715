"""Interaction-log parsing, synthetic corpus generation, and split logic.

Log format: one account sequence per line,
``<account_id>\\t<tag>:<item_id>( <tag>:<item_id>)*`` with tag in {A, B}.
Lines starting with ``#`` are comments. The synthetic generator emits the same
format plus a sidecar label file ``<line_no>\\t<persona per event>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigError, DataError

DOMAIN_A = "A"
DOMAIN_B = "B"
DOMAINS = (DOMAIN_A, DOMAIN_B)

# Synthetic persona process constants: sticky persona switching makes
# same-persona runs (a plantable sequential signal), and the within-cluster
# power law gives each persona a learnable preference head.
PERSONA_STAY_PROB = 0.8
WITHIN_CLUSTER_ZIPF = 1.2


class ItemRef(NamedTuple):
    domain: str
    index: int


@dataclass
class HybridSequence:
    """One account's time-ordered, domain-tagged interaction list."""

    account: int
    events: list[ItemRef]

    def domain_events(self, domain: str) -> list[ItemRef]:
        return [e for e in self.events if e.domain == domain]


class _StringIndex:
    """Bijective raw-string <-> dense-index map, first-seen order."""

    def __init__(self):
        self._to_index: dict[str, int] = {}
        self._to_raw: list[str] = []

    def __len__(self) -> int:
        return len(self._to_raw)

    def add(self, raw: str) -> int:
        idx = self._to_index.get(raw)
        if idx is None:
            idx = len(self._to_raw)
            self._to_index[raw] = idx
            self._to_raw.append(raw)
        return idx

    def encode(self, raw: str) -> int:
        return self._to_index[raw]

    def decode(self, idx: int) -> str:
        return self._to_raw[idx]

    def __contains__(self, raw: str) -> bool:
        return raw in self._to_index


class Vocabulary:
    """Dense indices for both item domains and for accounts."""

    def __init__(self):
        self.items = {DOMAIN_A: _StringIndex(), DOMAIN_B: _StringIndex()}
        self.accounts = _StringIndex()

    @property
    def n_items_a(self) -> int:
        return len(self.items[DOMAIN_A])

    @property
    def n_items_b(self) -> int:
        return len(self.items[DOMAIN_B])

    @property
    def n_accounts(self) -> int:
        return len(self.accounts)

    def n_items(self, domain: str) -> int:
        return len(self.items[domain])

    def decode_item(self, ref: ItemRef) -> str:
        return self.items[ref.domain].decode(ref.index)


@dataclass
class ParseReport:
    n_lines: int = 0
    n_comments: int = 0
    n_sequences: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


class ParseResult(NamedTuple):
    vocabulary: Vocabulary
    sequences: list[HybridSequence]
    report: ParseReport


def _parse_line(raw: str) -> tuple[str, list[tuple[str, str]]]:
    """Split one line into (account, [(tag, item), ...]); raises ValueError."""
    if "\t" not in raw:
        raise ValueError("missing tab separator")
    account, rest = raw.split("\t", 1)
    if not account:
        raise ValueError("empty account id")
    tokens = rest.split()
    if not tokens:
        raise ValueError("no events")
    events = []
    for tok in tokens:
        if ":" not in tok:
            raise ValueError(f"bad token {tok!r}")
        tag, item = tok.split(":", 1)
        if tag not in DOMAINS:
            raise ValueError(f"unknown domain tag {tag!r}")
        if not item:
            raise ValueError(f"empty item id in token {tok!r}")
        events.append((tag, item))
    return account, events


def parse_log(lines: Iterable[str]) -> ParseResult:
    """Parse an interaction log into sequences plus a first-seen vocabulary.

    Malformed lines and too-short sequences are collected in the report, not
    silently dropped. Only accepted sequences contribute to the vocabulary.
    """
    vocab = Vocabulary()
    sequences: list[HybridSequence] = []
    report = ParseReport()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        report.n_lines += 1
        if line.lstrip().startswith("#"):
            report.n_comments += 1
            continue
        try:
            account_raw, tagged = _parse_line(line)
        except ValueError as exc:
            report.rejected.append((line_no, str(exc)))
            continue
        if len(tagged) < 2:
            report.rejected.append((line_no, "too short"))
            continue
        account = vocab.accounts.add(account_raw)
        events = [ItemRef(tag, vocab.items[tag].add(item)) for tag, item in tagged]
        sequences.append(HybridSequence(account, events))
        report.n_sequences += 1
    return ParseResult(vocab, sequences, report)


def parse_log_file(path) -> ParseResult:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_log(fh)


def serialize_log(vocab: Vocabulary, sequences: Iterable[HybridSequence]) -> str:
    """Inverse of parse_log for accepted sequences (round-trip safe)."""
    lines = []
    for seq in sequences:
        toks = " ".join(f"{e.domain}:{vocab.decode_item(e)}" for e in seq.events)
        lines.append(f"{vocab.accounts.decode(seq.account)}\t{toks}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Synthetic shared-account corpus
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Generator settings for a planted-persona shared-account corpus."""

    n_accounts: int = 200
    personas_per_account: int = 2
    clusters_per_domain: int = 4
    items_per_domain: int = 300
    seq_len: int = 30
    sequences_per_account: int = 10
    noise_rate: float = 0.1
    rng_seed: int = 0

    def validate(self) -> None:
        counts = {
            "n_accounts": self.n_accounts,
            "personas_per_account": self.personas_per_account,
            "clusters_per_domain": self.clusters_per_domain,
            "items_per_domain": self.items_per_domain,
            "seq_len": self.seq_len,
            "sequences_per_account": self.sequences_per_account,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ConfigError(f"noise_rate must be in [0, 1], got {self.noise_rate}")
        if self.clusters_per_domain < self.personas_per_account:
            raise ConfigError("clusters_per_domain must be >= personas_per_account")
        if self.seq_len < 2:
            raise ConfigError("seq_len must be >= 2 (sequences need a target)")
        if self.items_per_domain < self.clusters_per_domain:
            raise ConfigError("items_per_domain must be >= clusters_per_domain")


def _cluster_partition(n_items: int, n_clusters: int) -> list[np.ndarray]:
    bounds = np.linspace(0, n_items, n_clusters + 1).astype(int)
    return [np.arange(bounds[c], bounds[c + 1]) for c in range(n_clusters)]


class SyntheticResult(NamedTuple):
    vocabulary: Vocabulary
    sequences: list[HybridSequence]
    persona_labels: list[list[int]]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticResult:
    """Generate hybrid sequences from planted per-account personas.

    Each account draws `personas_per_account` personas; a persona owns one
    item cluster per domain and a power-law preference over a private
    permutation of that cluster. Events follow a sticky persona Markov chain,
    pick a domain uniformly, then draw an item from the active persona's
    preference (or, with probability noise_rate, uniformly from the domain).
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)

    vocab = Vocabulary()
    for k in range(spec.n_accounts):
        vocab.accounts.add(f"u{k}")
    for i in range(spec.items_per_domain):
        vocab.items[DOMAIN_A].add(f"a{i}")
    for j in range(spec.items_per_domain):
        vocab.items[DOMAIN_B].add(f"b{j}")

    clusters = _cluster_partition(spec.items_per_domain, spec.clusters_per_domain)

    # Per (account, persona, domain): item array + preference law over it.
    pref_items: dict[tuple[int, int, str], np.ndarray] = {}
    pref_probs: dict[tuple[int, int, str], np.ndarray] = {}
    for k in range(spec.n_accounts):
        for domain in DOMAINS:
            owned = rng.choice(
                spec.clusters_per_domain, size=spec.personas_per_account, replace=False
            )
            for p, cluster_id in enumerate(owned):
                items = rng.permutation(clusters[cluster_id])
                weights = (np.arange(len(items)) + 1.0) ** -WITHIN_CLUSTER_ZIPF
                pref_items[(k, p, domain)] = items
                pref_probs[(k, p, domain)] = weights / weights.sum()

    sequences: list[HybridSequence] = []
    labels: list[list[int]] = []
    n_personas = spec.personas_per_account
    for k in range(spec.n_accounts):
        for _ in range(spec.sequences_per_account):
            events: list[ItemRef] = []
            seq_labels: list[int] = []
            persona = int(rng.integers(n_personas))
            for t in range(spec.seq_len):
                if t > 0 and n_personas > 1 and rng.random() >= PERSONA_STAY_PROB:
                    others = [p for p in range(n_personas) if p != persona]
                    persona = others[int(rng.integers(len(others)))]
                domain = DOMAIN_A if rng.random() < 0.5 else DOMAIN_B
                if rng.random() < spec.noise_rate:
                    item = int(rng.integers(spec.items_per_domain))
                else:
                    key = (k, persona, domain)
                    item = int(rng.choice(pref_items[key], p=pref_probs[key]))
                events.append(ItemRef(domain, item))
                seq_labels.append(persona)
            sequences.append(HybridSequence(k, events))
            labels.append(seq_labels)
    return SyntheticResult(vocab, sequences, labels)


def serialize_labels(labels: list[list[int]]) -> str:
    lines = [
        f"{line_no}\t" + " ".join(str(p) for p in row)
        for line_no, row in enumerate(labels, start=1)
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Train / validation / test split
# ---------------------------------------------------------------------------


def split_sequences(
    sequences: list[HybridSequence],
    ratios: tuple[float, float, float] = (0.75, 0.15, 0.10),
    rng_seed: int = 0,
) -> tuple[list[HybridSequence], list[HybridSequence], list[HybridSequence]]:
    """Disjoint shuffled split; floor sizes with the remainder going to train.

    For small N every split still receives at least one sequence (N >= 3),
    the deficit taken from train.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    n = len(sequences)
    if n < 3:
        raise DataError("dataset too small to split")
    n_train = int(np.floor(ratios[0] * n))
    n_valid = int(np.floor(ratios[1] * n))
    n_test = int(np.floor(ratios[2] * n))
    n_train += n - (n_train + n_valid + n_test)
    if n_valid == 0:
        n_valid, n_train = 1, n_train - 1
    if n_test == 0:
        n_test, n_train = 1, n_train - 1
    order = np.random.default_rng(rng_seed).permutation(n)
    train = [sequences[i] for i in order[:n_train]]
    valid = [sequences[i] for i in order[n_train : n_train + n_valid]]
    test = [sequences[i] for i in order[n_train + n_valid :]]
    return train, valid, test
