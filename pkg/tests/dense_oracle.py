"""Straightforward dense implementation of the propagation rules.

Independent oracle for the edge-list implementation: explicit per-node loops,
full neighbor lists pulled from the graph API, no shared code with the tape
forward. Only suitable for small graphs.
"""

import math

import numpy as np

from dagcn.data import DOMAIN_A, DOMAIN_B, DOMAINS


def _cos(x, y):
    nx = math.sqrt(float(np.dot(x, x)))
    ny = math.sqrt(float(np.dot(y, y)))
    if nx < 1e-12 or ny < 1e-12:
        return 0.0
    return min(1.0, max(-1.0, float(np.dot(x, y)) / (nx * ny)))


def _leaky(v, slope):
    return np.where(v >= 0.0, v, slope * v)


def _weights(scores_1, scores_2, s_self, mode, use_attention):
    n = len(scores_1) + len(scores_2) + 1
    if not use_attention:
        w = 1.0 / n
        return [w] * len(scores_1), [w] * len(scores_2), w
    e1 = [math.exp(s) for s in scores_1]
    e2 = [math.exp(s) for s in scores_2]
    e_self = math.exp(s_self)
    den = sum(e1) + sum(e2) + (e_self if mode == "softmax" else s_self)
    return [e / den for e in e1], [e / den for e in e2], e_self / den


def dense_propagate(graph, params, config, rounds):
    """Returns (users (n, H, w), items_a, items_b, accounts (n, w))."""
    n = params.user_emb.shape[0]
    h = params.user_emb.shape[1]
    u_cur = [params.user_emb[k, hh].astype(float).copy() for k in range(n) for hh in range(h)]
    x_cur = {
        DOMAIN_A: [row.astype(float).copy() for row in params.item_emb_a],
        DOMAIN_B: [row.astype(float).copy() for row in params.item_emb_b],
    }
    w1, w2 = params.user_w_neighbor, params.user_w_interact
    w3, w4 = params.item_w_neighbor, params.item_w_interact
    mode, use_att, slope = config.attention_mode, config.use_attention, config.leaky_slope

    for _ in range(rounds):
        u_next = []
        for k in range(n):
            items_a = [i for i, _ in graph.account_items[DOMAIN_A][k]]
            items_b = [j for j, _ in graph.account_items[DOMAIN_B][k]]
            for hh in range(h):
                u = u_cur[k * h + hh]
                s_a = [_cos(u, x_cur[DOMAIN_A][i]) for i in items_a]
                s_b = [_cos(u, x_cur[DOMAIN_B][j]) for j in items_b]
                g_a, g_b, g_self = _weights(s_a, s_b, _cos(u, u), mode, use_att)
                m = g_self * (w1 @ u)
                for g, i in zip(g_a, items_a):
                    x = x_cur[DOMAIN_A][i]
                    m = m + g * (w1 @ x + w2 @ (x * u))
                for g, j in zip(g_b, items_b):
                    x = x_cur[DOMAIN_B][j]
                    m = m + g * (w1 @ x + w2 @ (x * u))
                u_next.append(_leaky(m, slope))
        x_next = {}
        for domain in DOMAINS:
            rows = []
            for i in range(graph.n_items[domain]):
                x = x_cur[domain][i]
                user_nodes = [
                    k * h + hh for k in graph.item_accounts[domain][i] for hh in range(h)
                ]
                preds = graph.predecessors[domain][i]
                s_u = [_cos(x, u_cur[un]) for un in user_nodes]
                s_p = [_cos(x, x_cur[domain][p]) for p in preds]
                g_u, g_p, g_self = _weights(s_u, s_p, _cos(x, x), mode, use_att)
                m = g_self * (w3 @ x)
                for g, un in zip(g_u, user_nodes):
                    uu = u_cur[un]
                    m = m + g * (w3 @ uu + w4 @ (uu * x))
                for g, p in zip(g_p, preds):
                    xp = x_cur[domain][p]
                    m = m + g * (w3 @ xp + w4 @ (xp * x))
                rows.append(_leaky(m, slope))
            x_next[domain] = rows
        u_cur, x_cur = u_next, x_next

    width = u_cur[0].shape[0]
    users = np.asarray(u_cur).reshape(n, h, width)
    accounts = users.mean(axis=1)
    return users, np.asarray(x_cur[DOMAIN_A]), np.asarray(x_cur[DOMAIN_B]), accounts
