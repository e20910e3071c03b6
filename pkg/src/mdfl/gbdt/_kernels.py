"""Tree-growing and scoring kernels.

Each kernel exists twice: a scalar loop compiled by numba and a vectorized
numpy path. Both accumulate gradient sums in the same sequential order
(ascending feature value, per feature) so they produce identical trees.

``order[f]`` lists row indices sorted by feature ``f`` and ``xs[f]`` holds the
matching sorted values, so the split scan reads memory sequentially.

Tree arrays use a fixed heap-sized layout of ``2**(max_depth+1) - 1`` slots;
``feature == -1`` marks a leaf, unused slots stay leaves with value 0.
"""

import numpy as np

from .._accel import USE_JIT, jit


def _midpoint(a, b):
    m = a + (b - a) * 0.5
    if m >= b:
        m = a
    return m


def _split_score(gl, hl, gr, hr, parent, eps):
    # twice the second-order loss reduction; compared against 2 * min_gain
    return gl * gl / (hl + eps) + gr * gr / (hr + eps) - parent


_midpoint_c = jit(_midpoint) or _midpoint
_split_score_c = jit(_split_score) or _split_score


def _build_tree_loop(X, order, xs, g, h, w, max_depth, min_samples_leaf, min_gain,
                     learning_rate, eps):
    n, d = X.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    node_of = np.zeros(n, dtype=np.int64)

    lo = 0
    hi = 1
    next_id = 1
    for depth in range(max_depth + 1):
        width = hi - lo
        G = np.zeros(width)
        H = np.zeros(width)
        C = np.zeros(width)
        for j in range(n):
            i = order[0, j]
            k = node_of[i] - lo
            if k < 0 or k >= width or w[i] == 0.0:
                continue
            G[k] += g[i]
            H[k] += h[i]
            C[k] += w[i]

        parent = G * G / (H + eps)
        best_gain = np.full(width, -np.inf)
        best_feat = np.full(width, -1, dtype=np.int64)
        best_thr = np.zeros(width)
        if depth < max_depth:
            GL = np.zeros(width)
            HL = np.zeros(width)
            CL = np.zeros(width)
            last = np.zeros(width)
            seen = np.zeros(width, dtype=np.bool_)
            for f in range(d):
                GL[:] = 0.0
                HL[:] = 0.0
                CL[:] = 0.0
                seen[:] = False
                for j in range(n):
                    i = order[f, j]
                    k = node_of[i] - lo
                    if k < 0 or k >= width or w[i] == 0.0:
                        continue
                    x = xs[f, j]
                    if seen[k] and x > last[k]:
                        cr = C[k] - CL[k]
                        if CL[k] >= min_samples_leaf and cr >= min_samples_leaf:
                            gain = _split_score_c(GL[k], HL[k], G[k] - GL[k], H[k] - HL[k],
                                                  parent[k], eps)
                            if gain > best_gain[k]:
                                best_gain[k] = gain
                                best_feat[k] = f
                                best_thr[k] = _midpoint_c(last[k], x)
                    GL[k] += g[i]
                    HL[k] += h[i]
                    CL[k] += w[i]
                    last[k] = x
                    seen[k] = True

        any_split = False
        for k in range(width):
            node = lo + k
            if best_feat[k] >= 0 and best_gain[k] > 2.0 * min_gain:
                feature[node] = best_feat[k]
                threshold[node] = best_thr[k]
                left[node] = next_id
                right[node] = next_id + 1
                next_id += 2
                any_split = True
            else:
                value[node] = -learning_rate * G[k] / (H[k] + eps)
        if not any_split:
            break
        for i in range(n):
            node = node_of[i]
            if node >= lo and node < hi and feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node_of[i] = left[node]
                else:
                    node_of[i] = right[node]
        lo = hi
        hi = next_id
    return feature, threshold, left, right, value, node_of


_build_tree_loop_jit = jit(_build_tree_loop)


def build_tree_jit(X, order, xs, g, h, w, max_depth, min_samples_leaf, min_gain, learning_rate, eps):
    return _build_tree_loop_jit(X, order, xs, g, h, w, int(max_depth), float(min_samples_leaf),
                                float(min_gain), float(learning_rate), float(eps))


def build_tree_numpy(X, order, xs_all, g, h, w, max_depth, min_samples_leaf, min_gain,
                     learning_rate, eps):
    n, d = X.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    node_of = np.zeros(n, dtype=np.int64)
    sampled = w != 0.0
    sampled_sorted = sampled[order]  # (d, n)

    lo, hi, next_id = 0, 1, 1
    for depth in range(max_depth + 1):
        node_sorted = node_of[order]
        any_split = False
        for node in range(lo, hi):
            mask = (node_sorted == node) & sampled_sorted
            rows0 = order[0][mask[0]]
            m = rows0.size
            G = np.cumsum(g[rows0])[-1] if m else 0.0
            H = np.cumsum(h[rows0])[-1] if m else 0.0
            C = float(np.cumsum(w[rows0])[-1]) if m else 0.0
            best_f = -1
            if depth < max_depth and m >= 2:
                rows = order[mask].reshape(d, m)
                xs = xs_all[mask].reshape(d, m)
                GL = np.cumsum(g[rows], axis=1)[:, :-1]
                HL = np.cumsum(h[rows], axis=1)[:, :-1]
                CL = np.cumsum(w[rows], axis=1)[:, :-1]
                valid = (xs[:, 1:] > xs[:, :-1]) & (CL >= min_samples_leaf) & (C - CL >= min_samples_leaf)
                if valid.any():
                    gain = _split_score(GL, HL, G - GL, H - HL, G * G / (H + eps), eps)
                    gain = np.where(valid, gain, -np.inf)
                    flat = int(np.argmax(gain))
                    f, p = divmod(flat, m - 1)
                    if gain[f, p] > 2.0 * min_gain:
                        best_f = f
                        thr = _midpoint(xs[f, p], xs[f, p + 1])
            if best_f >= 0:
                feature[node] = best_f
                threshold[node] = thr
                left[node] = next_id
                right[node] = next_id + 1
                next_id += 2
                any_split = True
            else:
                value[node] = -learning_rate * G / (H + eps)
        if not any_split:
            break
        in_level = (node_of >= lo) & (node_of < hi)
        split_rows = np.nonzero(in_level & (feature[node_of] >= 0))[0]
        nodes = node_of[split_rows]
        go_left = X[split_rows, feature[nodes]] <= threshold[nodes]
        node_of[split_rows] = np.where(go_left, left[nodes], right[nodes])
        lo, hi = hi, next_id
    return feature, threshold, left, right, value, node_of


def _predict_scores_loop(X, base, feature, threshold, left, right, value, tree_class):
    n = X.shape[0]
    n_trees = feature.shape[0]
    out = np.empty((n, base.shape[0]))
    for s in range(n):
        for c in range(base.shape[0]):
            out[s, c] = base[c]
        for t in range(n_trees):
            node = 0
            while feature[t, node] >= 0:
                if X[s, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            out[s, tree_class[t]] += value[t, node]
    return out


predict_scores_jit = jit(_predict_scores_loop)


def predict_scores_numpy(X, base, feature, threshold, left, right, value, tree_class):
    n = X.shape[0]
    out = np.tile(base.astype(float), (n, 1))
    rows = np.arange(n)
    for t in range(feature.shape[0]):
        node = np.zeros(n, dtype=np.int64)
        f_t, thr_t, l_t, r_t = feature[t], threshold[t], left[t], right[t]
        active = f_t[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[rows[idx], f_t[nd]] <= thr_t[nd]
            node[idx] = np.where(go_left, l_t[nd], r_t[nd])
            active = f_t[node] >= 0
        out[:, tree_class[t]] += value[t][node]
    return out


if USE_JIT:
    build_tree = build_tree_jit
    predict_scores = predict_scores_jit
else:
    build_tree = build_tree_numpy
    predict_scores = predict_scores_numpy

BACKEND = "numba" if USE_JIT else "numpy"
