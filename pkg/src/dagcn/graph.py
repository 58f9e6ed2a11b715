"""CDS graph construction: account-item interaction graphs for both domains
plus directed same-domain item transition graphs, built from training
sequences only.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

from .data import DOMAIN_A, DOMAIN_B, DOMAINS, HybridSequence, Vocabulary
from .errors import DataError


@dataclass(frozen=True)
class GraphOptions:
    include_sequential_edges: bool = True
    min_edge_count: int = 1

    def __post_init__(self):
        if self.min_edge_count < 1:
            raise ValueError("min_edge_count must be >= 1")


class ItemNeighbors(NamedTuple):
    accounts: list[int]
    predecessors: list[int]
    successors: list[int]


class CdsGraph:
    """Immutable-by-convention adjacency for the four subgraphs.

    account_items[domain][k] is a sorted list of (item, count); transition
    edges are dicts (src, dst) -> count plus per-item sorted predecessor /
    successor lists.
    """

    def __init__(self, n_accounts: int, n_items_a: int, n_items_b: int, options: GraphOptions):
        self.n_accounts = n_accounts
        self.n_items = {DOMAIN_A: n_items_a, DOMAIN_B: n_items_b}
        self.options = options
        self.account_items = {d: [[] for _ in range(n_accounts)] for d in DOMAINS}
        self.item_accounts = {
            DOMAIN_A: [[] for _ in range(n_items_a)],
            DOMAIN_B: [[] for _ in range(n_items_b)],
        }
        self.transitions = {d: {} for d in DOMAINS}      # (src, dst) -> count
        self.predecessors = {
            DOMAIN_A: [[] for _ in range(n_items_a)],
            DOMAIN_B: [[] for _ in range(n_items_b)],
        }
        self.successors = {
            DOMAIN_A: [[] for _ in range(n_items_a)],
            DOMAIN_B: [[] for _ in range(n_items_b)],
        }


def build_cds_graph(
    sequences: list[HybridSequence],
    n_accounts: int,
    n_items_a: int,
    n_items_b: int,
    options: GraphOptions = GraphOptions(),
) -> CdsGraph:
    """Aggregate account-item and consecutive same-domain transition edges.

    Transition edges connect consecutive items of the domain-filtered
    subsequence (intervening other-domain events do not break adjacency);
    counts accumulate over all sequences. min_edge_count prunes transition
    edges only, never account-item edges.
    """
    if not sequences:
        raise DataError("no sequences")
    interactions = {d: Counter() for d in DOMAINS}  # (account, item) -> count
    transitions = {d: Counter() for d in DOMAINS}   # (src, dst) -> count
    for seq in sequences:
        if seq.account >= n_accounts:
            raise DataError(f"account {seq.account} out of range (n={n_accounts})")
        prev = {DOMAIN_A: None, DOMAIN_B: None}
        limit = {DOMAIN_A: n_items_a, DOMAIN_B: n_items_b}
        for ev in seq.events:
            if ev.index >= limit[ev.domain]:
                raise DataError(f"item {ev} out of range")
            interactions[ev.domain][(seq.account, ev.index)] += 1
            if prev[ev.domain] is not None:
                transitions[ev.domain][(prev[ev.domain], ev.index)] += 1
            prev[ev.domain] = ev.index

    graph = CdsGraph(n_accounts, n_items_a, n_items_b, options)
    for domain in DOMAINS:
        for (account, item), count in sorted(interactions[domain].items()):
            graph.account_items[domain][account].append((item, count))
            graph.item_accounts[domain][item].append(account)
        if options.include_sequential_edges:
            kept = {
                edge: count
                for edge, count in transitions[domain].items()
                if count >= options.min_edge_count
            }
            graph.transitions[domain] = dict(sorted(kept.items()))
            for (src, dst) in graph.transitions[domain]:
                graph.successors[domain][src].append(dst)
                graph.predecessors[domain][dst].append(src)
            for rows in (graph.successors[domain], graph.predecessors[domain]):
                for lst in rows:
                    lst.sort()
    return graph


def user_neighbors(graph: CdsGraph, account: int, domain: str) -> list[tuple[int, int]]:
    """Items the account interacted with in a domain, ascending, with counts."""
    if not 0 <= account < graph.n_accounts:
        raise IndexError(f"account {account} out of range")
    return list(graph.account_items[domain][account])


def item_neighbors(graph: CdsGraph, domain: str, item: int) -> ItemNeighbors:
    """Accounts plus same-domain transition predecessors/successors of an item."""
    if not 0 <= item < graph.n_items[domain]:
        raise IndexError(f"item {item} out of range for domain {domain}")
    return ItemNeighbors(
        accounts=list(graph.item_accounts[domain][item]),
        predecessors=list(graph.predecessors[domain][item]),
        successors=list(graph.successors[domain][item]),
    )


def graph_stats(graph: CdsGraph) -> dict:
    """Node/edge counts and account-degree histograms, JSON-ready."""
    def degree_hist(lists):
        hist = Counter(len(lst) for lst in lists)
        return {str(k): v for k, v in sorted(hist.items())}

    ga_edges = sum(len(lst) for lst in graph.account_items[DOMAIN_A])
    gb_edges = sum(len(lst) for lst in graph.account_items[DOMAIN_B])
    return {
        "n_accounts": graph.n_accounts,
        "n_items_a": graph.n_items[DOMAIN_A],
        "n_items_b": graph.n_items[DOMAIN_B],
        "ga_edges": ga_edges,
        "gb_edges": gb_edges,
        "gc_edges": len(graph.transitions[DOMAIN_A]),
        "gd_edges": len(graph.transitions[DOMAIN_B]),
        "gc_count_total": sum(graph.transitions[DOMAIN_A].values()),
        "gd_count_total": sum(graph.transitions[DOMAIN_B].values()),
        "account_degree_hist_a": degree_hist(graph.account_items[DOMAIN_A]),
        "account_degree_hist_b": degree_hist(graph.account_items[DOMAIN_B]),
    }


def export_edge_lists(graph: CdsGraph, vocab: Vocabulary, out_dir) -> None:
    """Write ga/gb/gc/gd.tsv edge lists (src, dst, count) with raw ids."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for domain, name in ((DOMAIN_A, "ga.tsv"), (DOMAIN_B, "gb.tsv")):
        with open(out / name, "w", encoding="utf-8") as fh:
            for account in range(graph.n_accounts):
                for item, count in graph.account_items[domain][account]:
                    raw_u = vocab.accounts.decode(account)
                    raw_i = vocab.items[domain].decode(item)
                    fh.write(f"{raw_u}\t{raw_i}\t{count}\n")
    for domain, name in ((DOMAIN_A, "gc.tsv"), (DOMAIN_B, "gd.tsv")):
        with open(out / name, "w", encoding="utf-8") as fh:
            for (src, dst), count in graph.transitions[domain].items():
                raw_s = vocab.items[domain].decode(src)
                raw_d = vocab.items[domain].decode(dst)
                fh.write(f"{raw_s}\t{raw_d}\t{count}\n")
