"""Forward computation: attention-weighted message passing over the CDS graph
with H latent users per account, account merging, sequence embeddings, and
dual-domain scoring.

Two equivalent surfaces exist on purpose:

* small per-node helpers (``attention_user``, ``message_user_from_item``, ...)
  that state the update rules directly and back the unit tests;
* a vectorized edge-list forward (``propagate_tensors``) recorded on an
  autodiff tape, used for training and evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import DOMAIN_A, DOMAIN_B, DOMAINS, HybridSequence
from .errors import ConfigError
from .graph import CdsGraph

ATTENTION_MODES = ("softmax", "literal")
POOLING_MODES = ("mean", "max")
MAX_LATENT_USERS = 5


class NoContextError(Exception):
    """History has no events in the queried domain; caller skips the domain."""


@dataclass
class ModelConfig:
    embed_dim: int = 100
    proj_dim: int | None = None          # defaults to embed_dim
    latent_users: int = 2
    leaky_slope: float = 0.2
    attention_mode: str = "softmax"
    rounds: int = 1
    use_attention: bool = True
    seq_pooling: str = "mean"

    def __post_init__(self):
        if self.proj_dim is None:
            self.proj_dim = self.embed_dim
        self.validate()

    def validate(self) -> None:
        if self.embed_dim < 1 or self.proj_dim < 1:
            raise ConfigError("embedding widths must be >= 1")
        if not 1 <= self.latent_users <= MAX_LATENT_USERS:
            raise ConfigError(
                f"latent users per account must be in [1, {MAX_LATENT_USERS}], "
                f"got {self.latent_users}"
            )
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError("leaky_slope must be in (0, 1)")
        if self.attention_mode not in ATTENTION_MODES:
            raise ConfigError(f"attention_mode must be one of {ATTENTION_MODES}")
        if self.seq_pooling not in POOLING_MODES:
            raise ConfigError(f"seq_pooling must be one of {POOLING_MODES}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.rounds > 1 and self.proj_dim != self.embed_dim:
            raise ConfigError("stacking rounds > 1 requires proj_dim == embed_dim")

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "proj_dim": self.proj_dim,
            "latent_users": self.latent_users,
            "leaky_slope": self.leaky_slope,
            "attention_mode": self.attention_mode,
            "rounds": self.rounds,
            "use_attention": self.use_attention,
            "seq_pooling": self.seq_pooling,
        }


# Checkpoint array order is part of the file format; do not reorder.
PARAM_ORDER = (
    "item_emb_a",
    "item_emb_b",
    "user_emb",
    "user_w_neighbor",
    "user_w_interact",
    "item_w_neighbor",
    "item_w_interact",
    "score_w_a",
    "score_w_b",
)


@dataclass
class ModelParams:
    """All trainable arrays. user_emb is (n_accounts, H, d)."""

    item_emb_a: np.ndarray
    item_emb_b: np.ndarray
    user_emb: np.ndarray
    user_w_neighbor: np.ndarray
    user_w_interact: np.ndarray
    item_w_neighbor: np.ndarray
    item_w_interact: np.ndarray
    score_w_a: np.ndarray
    score_w_b: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.as_dict().items()})

    def item_emb(self, domain: str) -> np.ndarray:
        return self.item_emb_a if domain == DOMAIN_A else self.item_emb_b

    def score_w(self, domain: str) -> np.ndarray:
        return self.score_w_a if domain == DOMAIN_A else self.score_w_b

    @property
    def n_accounts(self) -> int:
        return self.user_emb.shape[0]

    @property
    def latent_users(self) -> int:
        return self.user_emb.shape[1]

    def validate_shapes(self, config: ModelConfig, n_accounts: int, n_items_a: int, n_items_b: int):
        d, dp, h = config.embed_dim, config.proj_dim, config.latent_users
        expected = {
            "item_emb_a": (n_items_a, d),
            "item_emb_b": (n_items_b, d),
            "user_emb": (n_accounts, h, d),
            "user_w_neighbor": (dp, d),
            "user_w_interact": (dp, d),
            "item_w_neighbor": (dp, d),
            "item_w_interact": (dp, d),
            "score_w_a": (d, 2 * dp),
            "score_w_b": (d, 2 * dp),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ConfigError(f"{name} has shape {actual}, expected {shape}")

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.as_dict().values())


# ---------------------------------------------------------------------------
# Per-node update rules
# ---------------------------------------------------------------------------


def cosine_similarity(x: np.ndarray, y: np.ndarray) -> float:
    """Cosine of two vectors; 0 when either norm is below 1e-12."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx < 1e-12 or ny < 1e-12:
        return 0.0
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


@dataclass
class AttentionWeights:
    """Normalized weights over (group-1 neighbors, group-2 neighbors, self)."""

    weights_a: np.ndarray
    weights_b: np.ndarray
    weight_self: float


def normalize_attention(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    score_self: float,
    mode: str,
    use_attention: bool = True,
) -> AttentionWeights:
    """Turn raw similarity scores into message weights.

    softmax mode exponentiates every term including self. literal mode keeps
    the printed normalization: the self score enters the denominator raw while
    every numerator (self included) is exponentiated, so literal weights need
    not sum to 1.
    """
    s_a = np.asarray(scores_a, dtype=np.float64)
    s_b = np.asarray(scores_b, dtype=np.float64)
    n_total = len(s_a) + len(s_b) + 1
    if not use_attention:
        w = 1.0 / n_total
        return AttentionWeights(np.full(len(s_a), w), np.full(len(s_b), w), w)
    e_a = np.exp(s_a)
    e_b = np.exp(s_b)
    e_self = float(np.exp(score_self))
    if mode == "softmax":
        denom = e_a.sum() + e_b.sum() + e_self
    elif mode == "literal":
        denom = e_a.sum() + e_b.sum() + score_self
    else:
        raise ConfigError(f"unknown attention_mode {mode!r}")
    return AttentionWeights(e_a / denom, e_b / denom, e_self / denom)


def attention_user(
    params: ModelParams,
    config: ModelConfig,
    neighbors_a: Sequence[int],
    neighbors_b: Sequence[int],
    account: int,
    h: int,
) -> AttentionWeights:
    """Weights on one latent user's messages from its two-domain neighborhood."""
    e_u = params.user_emb[account, h]
    s_a = [cosine_similarity(e_u, params.item_emb_a[i]) for i in neighbors_a]
    s_b = [cosine_similarity(e_u, params.item_emb_b[j]) for j in neighbors_b]
    s_self = cosine_similarity(e_u, e_u)
    return normalize_attention(s_a, s_b, s_self, config.attention_mode, config.use_attention)


def message_user_from_item(
    e_item: np.ndarray,
    e_user: np.ndarray,
    w_neighbor: np.ndarray,
    w_interact: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Weighted item-to-user message: projection plus elementwise interaction."""
    return gamma * (w_neighbor @ e_item + w_interact @ (e_item * e_user))


def message_self(e_user: np.ndarray, w_neighbor: np.ndarray, gamma: float) -> np.ndarray:
    return gamma * (w_neighbor @ e_user)


def aggregate_user(messages: Sequence[np.ndarray], config: ModelConfig) -> np.ndarray:
    """Sum incoming messages, then apply the leaky rectifier."""
    total = np.sum(np.asarray(messages, dtype=np.float64), axis=0)
    return np.where(total >= 0.0, total, config.leaky_slope * total)


def update_item(
    e_item: np.ndarray,
    user_vectors: Sequence[np.ndarray],
    predecessor_vectors: Sequence[np.ndarray],
    params: ModelParams,
    config: ModelConfig,
) -> np.ndarray:
    """Item-side update mirroring the user rule with its own projections.

    Messages arrive from each neighboring latent user, from each same-domain
    transition predecessor, and from the item itself; weights normalize over
    that full neighborhood.
    """
    s_users = [cosine_similarity(e_item, u) for u in user_vectors]
    s_preds = [cosine_similarity(e_item, p) for p in predecessor_vectors]
    s_self = cosine_similarity(e_item, e_item)
    att = normalize_attention(s_users, s_preds, s_self, config.attention_mode, config.use_attention)
    w_n, w_i = params.item_w_neighbor, params.item_w_interact
    messages = [message_self(e_item, w_n, att.weight_self)]
    for g, u in zip(att.weights_a, user_vectors):
        messages.append(message_user_from_item(np.asarray(u), e_item, w_n, w_i, g))
    for g, p in zip(att.weights_b, predecessor_vectors):
        messages.append(message_user_from_item(np.asarray(p), e_item, w_n, w_i, g))
    return aggregate_user(messages, config)


def account_embedding(latent_user_vectors: np.ndarray) -> np.ndarray:
    """Merge an account's latent users by arithmetic mean."""
    vecs = np.asarray(latent_user_vectors, dtype=np.float64)
    return vecs.mean(axis=0)


def sequence_embedding(
    history: Sequence,
    domain: str,
    reps: "NodeReps",
    account: int,
    config: ModelConfig,
) -> np.ndarray:
    """Pool the propagated reps of the history's items in ``domain`` and
    concatenate the account representation."""
    idx = [e.index for e in history if e.domain == domain]
    if not idx:
        raise NoContextError("no context")
    vecs = reps.items[domain][idx]
    pooled = vecs.mean(axis=0) if config.seq_pooling == "mean" else vecs.max(axis=0)
    return np.concatenate([pooled, reps.accounts[account]])


def score_domain(seq_emb: np.ndarray, domain: str, params: ModelParams) -> np.ndarray:
    """Logits over the domain vocabulary for one sequence embedding."""
    return params.item_emb(domain) @ (params.score_w(domain) @ seq_emb)


# ---------------------------------------------------------------------------
# Vectorized edge-list forward
# ---------------------------------------------------------------------------


@dataclass
class GraphArrays:
    """Flat edge arrays for the tape forward, grouped by target node.

    User nodes are account*H + h; every latent user of an account shares the
    account's neighborhoods. Reductions run in this fixed edge order.
    """

    n_accounts: int
    latent_users: int
    n_items: dict
    ua_user: np.ndarray
    ua_item: np.ndarray
    ub_user: np.ndarray
    ub_item: np.ndarray
    user_deg: np.ndarray
    iu_item: dict = field(default_factory=dict)    # domain -> item targets
    iu_user: dict = field(default_factory=dict)    # domain -> user-node sources
    pr_dst: dict = field(default_factory=dict)     # domain -> transition targets
    pr_src: dict = field(default_factory=dict)     # domain -> transition sources
    item_deg: dict = field(default_factory=dict)

    @property
    def n_user_nodes(self) -> int:
        return self.n_accounts * self.latent_users

    @property
    def account_of_node(self) -> np.ndarray:
        return np.arange(self.n_user_nodes) // self.latent_users


def build_graph_arrays(graph: CdsGraph, latent_users: int) -> GraphArrays:
    h = latent_users
    n = graph.n_accounts

    def user_side(domain):
        users, items = [], []
        for k in range(n):
            neigh = [i for i, _ in graph.account_items[domain][k]]
            for hh in range(h):
                node = k * h + hh
                users.extend([node] * len(neigh))
                items.extend(neigh)
        return np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64)

    ua_user, ua_item = user_side(DOMAIN_A)
    ub_user, ub_item = user_side(DOMAIN_B)
    user_deg = np.zeros(n * h, dtype=np.int64)
    np.add.at(user_deg, ua_user, 1)
    np.add.at(user_deg, ub_user, 1)

    arrays = GraphArrays(
        n_accounts=n,
        latent_users=h,
        n_items=dict(graph.n_items),
        ua_user=ua_user,
        ua_item=ua_item,
        ub_user=ub_user,
        ub_item=ub_item,
        user_deg=user_deg,
    )
    for domain in DOMAINS:
        iu_item, iu_user, pr_dst, pr_src = [], [], [], []
        for i in range(graph.n_items[domain]):
            for account in graph.item_accounts[domain][i]:
                for hh in range(h):
                    iu_item.append(i)
                    iu_user.append(account * h + hh)
            for src in graph.predecessors[domain][i]:
                pr_dst.append(i)
                pr_src.append(src)
        arrays.iu_item[domain] = np.asarray(iu_item, dtype=np.int64)
        arrays.iu_user[domain] = np.asarray(iu_user, dtype=np.int64)
        arrays.pr_dst[domain] = np.asarray(pr_dst, dtype=np.int64)
        arrays.pr_src[domain] = np.asarray(pr_src, dtype=np.int64)
        deg = np.zeros(graph.n_items[domain], dtype=np.int64)
        np.add.at(deg, arrays.iu_item[domain], 1)
        np.add.at(deg, arrays.pr_dst[domain], 1)
        arrays.item_deg[domain] = deg
    return arrays


def _edge_attention(tape, s_edges, segs, s_self, n_nodes, config, deg):
    """Per-edge and self weights for one node family (two edge groups)."""
    if not config.use_attention:
        w = 1.0 / (deg.astype(np.float64) + 1.0)
        gammas = [tape.const(w[seg]) for seg in segs]
        return gammas, tape.const(w)
    exps = [ad.exp(s) for s in s_edges]
    exp_self = ad.exp(s_self)
    den = exp_self if config.attention_mode == "softmax" else s_self
    for e, seg in zip(exps, segs):
        den = ad.add(den, ad.segment_sum_vec(e, seg, n_nodes))
    gammas = [ad.div(e, ad.gather_vec(den, seg)) for e, seg in zip(exps, segs)]
    gamma_self = ad.div(exp_self, den)
    return gammas, gamma_self


def _weighted_messages(tape, src_vecs, dst_vecs, w_n, w_i, gamma):
    m = ad.add(ad.linear_t(src_vecs, w_n), ad.linear_t(ad.mul(src_vecs, dst_vecs), w_i))
    return ad.scale_rows(m, gamma)


def _one_round(tape, arrays: GraphArrays, u, xa, xb, t, config: ModelConfig):
    n_u = arrays.n_user_nodes
    slope = config.leaky_slope

    # User-side update from both item domains plus self-connection.
    ua_u = ad.gather_rows(u, arrays.ua_user)
    ua_x = ad.gather_rows(xa, arrays.ua_item)
    ub_u = ad.gather_rows(u, arrays.ub_user)
    ub_x = ad.gather_rows(xb, arrays.ub_item)
    s_a = ad.cosine_rows(ua_u, ua_x)
    s_b = ad.cosine_rows(ub_u, ub_x)
    s_self = ad.cosine_rows(u, u)
    (g_a, g_b), g_self = _edge_attention(
        tape, [s_a, s_b], [arrays.ua_user, arrays.ub_user], s_self, n_u, config, arrays.user_deg
    )
    msg_a = _weighted_messages(tape, ua_x, ua_u, t["user_w_neighbor"], t["user_w_interact"], g_a)
    msg_b = _weighted_messages(tape, ub_x, ub_u, t["user_w_neighbor"], t["user_w_interact"], g_b)
    msg_self = ad.scale_rows(ad.linear_t(u, t["user_w_neighbor"]), g_self)
    agg = ad.add(ad.add(ad.segment_sum_rows(msg_a, arrays.ua_user, n_u),
                        ad.segment_sum_rows(msg_b, arrays.ub_user, n_u)), msg_self)
    u_next = ad.leaky_relu(agg, slope)

    # Item-side update: latent-user neighbors + transition predecessors + self.
    items_next = {}
    for domain, x in ((DOMAIN_A, xa), (DOMAIN_B, xb)):
        n_i = arrays.n_items[domain]
        iu_i, iu_u = arrays.iu_item[domain], arrays.iu_user[domain]
        pr_d, pr_s = arrays.pr_dst[domain], arrays.pr_src[domain]
        xv_u = ad.gather_rows(x, iu_i)
        uv = ad.gather_rows(u, iu_u)
        xv_p = ad.gather_rows(x, pr_d)
        pv = ad.gather_rows(x, pr_s)
        s_u = ad.cosine_rows(xv_u, uv)
        s_p = ad.cosine_rows(xv_p, pv)
        s_i_self = ad.cosine_rows(x, x)
        (g_u, g_p), g_i_self = _edge_attention(
            tape, [s_u, s_p], [iu_i, pr_d], s_i_self, n_i, config, arrays.item_deg[domain]
        )
        m_u = _weighted_messages(tape, uv, xv_u, t["item_w_neighbor"], t["item_w_interact"], g_u)
        m_p = _weighted_messages(tape, pv, xv_p, t["item_w_neighbor"], t["item_w_interact"], g_p)
        m_self = ad.scale_rows(ad.linear_t(x, t["item_w_neighbor"]), g_i_self)
        agg_i = ad.add(ad.add(ad.segment_sum_rows(m_u, iu_i, n_i),
                              ad.segment_sum_rows(m_p, pr_d, n_i)), m_self)
        items_next[domain] = ad.leaky_relu(agg_i, slope)
    return u_next, items_next[DOMAIN_A], items_next[DOMAIN_B]


def param_tensors(tape, params: ModelParams) -> dict[str, ad.Tensor]:
    """Leaf tensors for every parameter; user_emb is flattened to 2-D."""
    t = {}
    for name, arr in params.as_dict().items():
        if name == "user_emb":
            n, h, d = arr.shape
            t[name] = tape.leaf(arr.reshape(n * h, d), name)
        else:
            t[name] = tape.leaf(arr, name)
    return t


def propagate_tensors(tape, arrays: GraphArrays, t: dict, config: ModelConfig, rounds: int):
    """Run ``rounds`` simultaneous update rounds; returns (U, XA, XB, ACC)."""
    u, xa, xb = t["user_emb"], t["item_emb_a"], t["item_emb_b"]
    for _ in range(rounds):
        u, xa, xb = _one_round(tape, arrays, u, xa, xb, t, config)
    acc = ad.scale_const(
        ad.segment_sum_rows(u, arrays.account_of_node, arrays.n_accounts),
        1.0 / arrays.latent_users,
    )
    return u, xa, xb, acc


@dataclass
class NodeReps:
    """Propagated representations for every node, as plain arrays."""

    users: np.ndarray              # (n_accounts, H, width)
    items: dict                    # domain -> (n_items, width)
    accounts: np.ndarray           # (n_accounts, width)


def propagate(
    graph: CdsGraph,
    params: ModelParams,
    config: ModelConfig,
    rounds: int | None = None,
    arrays: GraphArrays | None = None,
) -> NodeReps:
    """Forward-only propagation; ``rounds=0`` returns the raw embeddings."""
    if rounds is None:
        rounds = config.rounds
    if arrays is None:
        arrays = build_graph_arrays(graph, config.latent_users)
    tape = ad.Tape()
    t = param_tensors(tape, params)
    u, xa, xb, acc = propagate_tensors(tape, arrays, t, config, rounds)
    n, h = arrays.n_accounts, arrays.latent_users
    reps = NodeReps(
        users=u.value.reshape(n, h, -1).copy(),
        items={DOMAIN_A: xa.value.copy(), DOMAIN_B: xb.value.copy()},
        accounts=acc.value.copy(),
    )
    tape.release()
    return reps
