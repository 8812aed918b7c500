"""Compiled inner loops for tree growing and ensemble traversal."""

import numpy as np
from numba import njit


@njit(cache=True)
def grow_tree(X, g, h, rows, max_depth, lam, min_leaf, min_child_weight, learning_rate):
    """Exact greedy growth, breadth first; returns (feature, threshold, left, right, value)."""
    d = X.shape[1]
    cap = 2 ** (max_depth + 1) - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)

    idx = rows.copy()
    scratch = np.empty_like(idx)
    stop[0] = idx.size
    n_nodes = 1
    node = 0
    while node < n_nodes:
        s = start[node]
        e = stop[node]
        G = 0.0
        H = 0.0
        for p in range(s, e):
            G += g[idx[p]]
            H += h[idx[p]]
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        if depth[node] < max_depth and e - s >= 2 * min_leaf:
            parent = G * G / (H + lam)
            size = e - s
            vals = np.empty(size)
            for j in range(d):
                for p in range(size):
                    vals[p] = X[idx[s + p], j]
                order = np.argsort(vals, kind="mergesort")
                GL = 0.0
                HL = 0.0
                for p in range(size - 1):
                    r = idx[s + order[p]]
                    GL += g[r]
                    HL += h[r]
                    v = vals[order[p]]
                    vn = vals[order[p + 1]]
                    if vn <= v:
                        continue
                    cl = p + 1
                    if cl < min_leaf or size - cl < min_leaf:
                        continue
                    HR = H - HL
                    if HL < min_child_weight or HR < min_child_weight:
                        continue
                    GR = G - GL
                    gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent)
                    if gain > best_gain + 1e-12:
                        best_gain = gain
                        best_f = j
                        t = 0.5 * (v + vn)
                        # midpoint may round onto the upper value
                        best_thr = t if t < vn else v
        if best_f >= 0:
            # stable partition of the node's rows
            nl = 0
            for p in range(s, e):
                if X[idx[p], best_f] <= best_thr:
                    scratch[s + nl] = idx[p]
                    nl += 1
            k = s + nl
            for p in range(s, e):
                if X[idx[p], best_f] > best_thr:
                    scratch[k] = idx[p]
                    k += 1
            for p in range(s, e):
                idx[p] = scratch[p]
            feature[node] = best_f
            threshold[node] = best_thr
            li = n_nodes
            ri = n_nodes + 1
            left[node] = li
            right[node] = ri
            depth[li] = depth[node] + 1
            depth[ri] = depth[node] + 1
            start[li] = s
            stop[li] = s + nl
            start[ri] = s + nl
            stop[ri] = e
            n_nodes += 2
        else:
            value[node] = -G / (H + lam) * learning_rate
        node += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes])


@njit(cache=True)
def ensemble_raw_score(X, feature, threshold, left, right, value, base_score):
    k = X.shape[0]
    T = feature.shape[0]
    out = np.empty(k)
    for i in range(k):
        acc = base_score
        for t in range(T):
            node = 0
            while feature[t, node] >= 0:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += value[t, node]
        out[i] = acc
    return out
