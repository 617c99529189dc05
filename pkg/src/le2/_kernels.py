"""Decision-tree kernels: CART growth and forest traversal.

Each kernel exists twice, a numba loop version (``*_nb``) and a vectorised
numpy version (``*_np``). Both visit nodes in the same order and draw
candidate features from the same splitmix64 stream, so they build identical
trees. ``build_tree`` / ``forest_votes`` dispatch on ``le2._accel.USE_NUMBA``.

Tree arrays: ``feature[k] == -1`` marks a leaf; ``value[k]`` is the positive
fraction of the training samples reaching node ``k``; samples with
``x[feature] <= threshold`` go left.
"""

from __future__ import annotations

import numpy as np

from le2._accel import USE_NUMBA, njit

GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def max_tree_nodes(n_samples: int, max_depth: int, min_samples_leaf: int) -> int:
    leaves = max(1, n_samples // max(1, min_samples_leaf))
    return int(min(2 ** (max_depth + 1) - 1, 2 * leaves - 1))


# --------------------------------------------------------------------------- numpy


def _splitmix_py(state: int) -> tuple[int, int]:
    state = (state + GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _best_split_np(xs: np.ndarray, ys: np.ndarray, min_leaf: int):
    """Best (score, position, threshold) along one feature, or None."""
    order = np.argsort(xs, kind="quicksort")
    v = xs[order]
    if v[0] == v[-1]:
        return "constant"
    n = len(v)
    cum = np.cumsum(ys[order]).astype(np.float64)
    i = np.arange(min_leaf - 1, n - min_leaf)
    if not len(i):
        return None
    i = i[v[i] < v[i + 1]]
    if not len(i):
        return None
    pl = cum[i]
    nl = (i + 1).astype(np.float64)
    pr = cum[-1] - pl
    nr = n - nl
    score = pl * (nl - pl) / nl + pr * (nr - pr) / nr
    k = int(np.argmin(score))
    pos = int(i[k])
    thr = 0.5 * (v[pos] + v[pos + 1])
    if thr >= v[pos + 1]:
        thr = v[pos]
    return float(score[k]), pos, float(thr)


def build_tree_np(X, y, sample_idx, max_depth, min_samples_leaf, max_features, seed):
    n_features = X.shape[1]
    cap = max_tree_nodes(len(sample_idx), max_depth, min_samples_leaf)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    work = np.array(sample_idx, dtype=np.int64)
    stack = [(0, 0, len(work), 0)]
    n_nodes = 1
    seed = int(seed) & _MASK
    while stack:
        node, start, end, depth = stack.pop()
        idx = work[start:end]
        n = end - start
        ys = y[idx]
        pos = int(ys.sum())
        value[node] = pos / n
        if depth >= max_depth or n < 2 * min_samples_leaf or pos == 0 or pos == n:
            continue
        state = (seed + node * GOLDEN) & _MASK
        perm = np.arange(n_features)
        best = None
        evaluated = 0
        for j in range(n_features):
            if evaluated >= max_features:
                break
            state, z = _splitmix_py(state)
            r = j + z % (n_features - j)
            perm[j], perm[r] = perm[r], perm[j]
            f = int(perm[j])
            res = _best_split_np(X[idx, f], ys, min_samples_leaf)
            if res == "constant":
                continue
            evaluated += 1
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], f, res[2])
        if best is None:
            continue
        _, f, thr = best
        mask = X[idx, f] <= thr
        n_left = int(mask.sum())
        work[start:end] = np.concatenate([idx[mask], idx[~mask]])
        feature[node] = f
        threshold[node] = thr
        left[node], right[node] = n_nodes, n_nodes + 1
        n_nodes += 2
        stack.append((n_nodes - 1, start + n_left, end, depth + 1))
        stack.append((n_nodes - 2, start, start + n_left, depth + 1))
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def forest_votes_np(X, feature, threshold, left, right, value, roots):
    """Number of trees voting positive (leaf fraction > 0.5) for each row of X."""
    n = X.shape[0]
    if n == 0 or len(roots) == 0:
        return np.zeros(n, dtype=np.int64)
    nodes = np.broadcast_to(roots, (n, len(roots))).copy()
    rows = np.arange(n)[:, None]
    while True:
        f = feature[nodes]
        internal = f >= 0
        if not internal.any():
            break
        go_left = X[rows, np.where(internal, f, 0)] <= threshold[nodes]
        nodes = np.where(internal, np.where(go_left, left[nodes], right[nodes]), nodes)
    return (value[nodes] > 0.5).sum(axis=1).astype(np.int64)


# --------------------------------------------------------------------------- numba


@njit
def _splitmix_nb(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@njit
def _build_tree_nb(X, y, work, max_depth, min_leaf, max_features, seed, cap):
    n_features = X.shape[1]
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    perm = np.empty(n_features, dtype=np.int64)
    m = work.shape[0]
    xs = np.empty(m)
    ys = np.empty(m, dtype=np.int64)
    tmp = np.empty(m, dtype=np.int64)
    golden = np.uint64(0x9E3779B97F4A7C15)

    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        n = end - start
        pos = 0
        for k in range(start, end):
            pos += y[work[k]]
        value[node] = pos / n
        if depth >= max_depth or n < 2 * min_leaf or pos == 0 or pos == n:
            continue

        state = seed + np.uint64(node) * golden
        for j in range(n_features):
            perm[j] = j
        best_score = np.inf
        best_f = -1
        best_thr = 0.0
        evaluated = 0
        for j in range(n_features):
            if evaluated >= max_features:
                break
            state, z = _splitmix_nb(state)
            r = j + np.int64(z % np.uint64(n_features - j))
            t = perm[j]
            perm[j] = perm[r]
            perm[r] = t
            f = perm[j]
            for k in range(n):
                xs[k] = X[work[start + k], f]
            order = np.argsort(xs[:n])
            if xs[order[0]] == xs[order[n - 1]]:
                continue
            evaluated += 1
            for k in range(n):
                ys[k] = y[work[start + order[k]]]
            pl = 0
            for k in range(min_leaf - 1):
                pl += ys[k]
            for i in range(min_leaf - 1, n - min_leaf):
                pl += ys[i]
                vi = xs[order[i]]
                vn = xs[order[i + 1]]
                if not vi < vn:
                    continue
                fpl = np.float64(pl)
                nl = np.float64(i + 1)
                pr = np.float64(pos) - fpl
                nr = np.float64(n) - nl
                score = fpl * (nl - fpl) / nl + pr * (nr - pr) / nr
                if score < best_score:
                    best_score = score
                    best_f = f
                    thr = 0.5 * (vi + vn)
                    if thr >= vn:
                        thr = vi
                    best_thr = thr
        if best_f < 0:
            continue
        # stable partition of work[start:end]
        nl_count = 0
        for k in range(start, end):
            if X[work[k], best_f] <= best_thr:
                tmp[nl_count] = work[k]
                nl_count += 1
        r_count = nl_count
        for k in range(start, end):
            if not X[work[k], best_f] <= best_thr:
                tmp[r_count] = work[k]
                r_count += 1
        for k in range(n):
            work[start + k] = tmp[k]
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        st_node[top] = right[node]
        st_start[top] = start + nl_count
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = left[node]
        st_start[top] = start
        st_end[top] = start + nl_count
        st_depth[top] = depth + 1
        top += 1
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def build_tree_nb(X, y, sample_idx, max_depth, min_samples_leaf, max_features, seed):
    work = np.array(sample_idx, dtype=np.int64)
    cap = max_tree_nodes(len(work), max_depth, min_samples_leaf)
    return _build_tree_nb(
        np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(y, dtype=np.int64), work,
        int(max_depth), int(min_samples_leaf), int(max_features), np.uint64(int(seed) & _MASK), cap,
    )


@njit
def _forest_votes_nb(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    votes = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for t in range(roots.shape[0]):
            k = roots[t]
            while feature[k] >= 0:
                if X[i, feature[k]] <= threshold[k]:
                    k = left[k]
                else:
                    k = right[k]
            if value[k] > 0.5:
                votes[i] += 1
    return votes


def forest_votes_nb(X, feature, threshold, left, right, value, roots):
    return _forest_votes_nb(np.ascontiguousarray(X, dtype=np.float64), feature, threshold, left, right,
                            value, roots)


if USE_NUMBA:
    build_tree = build_tree_nb
    forest_votes = forest_votes_nb
else:
    build_tree = build_tree_np
    forest_votes = forest_votes_np
