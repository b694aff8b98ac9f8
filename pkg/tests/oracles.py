"""Brute-force reference implementations used only by tests.

Everything here is written with explicit Python loops over plain floats so a
bug in the vectorized library cannot hide in its own oracle.
"""

import math

import numpy as np


def naive_softmax(row):
    m = max(row)
    exps = [math.exp(v - m) for v in row]
    s = sum(exps)
    return [e / s for e in exps]


def naive_full_attention(q, k, v):
    """Row-by-row scaled dot-product attention for one window."""
    q, k, v = np.asarray(q), np.asarray(k), np.asarray(v)
    w, d = q.shape
    out = np.zeros_like(v, dtype=float)
    for i in range(w):
        scores = [sum(q[i, t] * k[j, t] for t in range(d)) / math.sqrt(d) for j in range(w)]
        weights = naive_softmax(scores)
        for j in range(w):
            for t in range(v.shape[1]):
                out[i, t] += weights[j] * v[j, t]
    return out


def naive_measurement(q, k):
    """Max minus mean of the scaled scores, one value per query row."""
    q, k = np.asarray(q), np.asarray(k)
    w, d = q.shape
    out = []
    for i in range(w):
        scores = [sum(q[i, t] * k[j, t] for t in range(d)) / math.sqrt(d) for j in range(k.shape[0])]
        out.append(max(scores) - sum(scores) / len(scores))
    return np.array(out)


def naive_top_u(measure, u):
    """Largest-u indices, ties to the lower index, ascending."""
    order = sorted(range(len(measure)), key=lambda i: (-measure[i], i))
    return sorted(order[:u])


def naive_ssaw(q, k, v, u):
    """Sparse window attention: oracle for selected and fallback rows."""
    q, k, v = np.asarray(q), np.asarray(k), np.asarray(v)
    selected = naive_top_u(naive_measurement(q, k), u)
    full = naive_full_attention(q, k, v)
    mean_v = v.mean(axis=0)
    out = np.zeros_like(v, dtype=float)
    for i in range(q.shape[0]):
        out[i] = full[i] if i in selected else mean_v
    return out, selected


def naive_average_ranks(scores_by_method):
    """Competition-free average ranks with ties sharing the mean rank.

    scores_by_method: dict name -> accuracy for one dataset (higher better).
    Returns dict name -> rank (1 = best); tied groups all get the average of
    the positions they span.
    """
    items = sorted(scores_by_method.items(), key=lambda kv: -kv[1])
    ranks = {}
    i = 0
    while i < len(items):
        j = i
        while j < len(items) and items[j][1] == items[i][1]:
            j += 1
        shared = (i + 1 + j) / 2.0
        for name, _ in items[i:j]:
            ranks[name] = shared
        i = j
    return ranks
