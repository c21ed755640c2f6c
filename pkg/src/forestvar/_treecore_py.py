"""Pure-Python tree kernels (fallback backend).

This module and the compiled extension ``_treecore`` implement the exact
same contract and must produce bitwise-identical outputs for identical
inputs; the test suite enforces this whenever the extension is available.

Flat tree encoding, struct-of-arrays: node 0 is the root; ``feature[q] < 0``
marks a leaf; otherwise points with ``x[feature] <= threshold`` descend into
``left[q]``.  A forest is the per-tree arrays concatenated with an
``offsets`` vector (child links are local to each tree's block).

Determinism constraints honored here and in the compiled twin:

* the sort inside the split search is stable on (value, position);
* running sums are accumulated sequentially (``cumsum``), never pairwise;
* feature draws come from a splitmix64 stream keyed by (tree seed, heap
  node id), so they depend only on the node's position in the tree and not
  on the order the input indices were given in.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _draw_features(seed, node_id, d, mtry):
    """mtry distinct feature indices via a partial Fisher-Yates shuffle."""
    state = _mix64(seed ^ _mix64(node_id))
    fbuf = list(range(d))
    ncand = min(mtry, d)
    for j in range(ncand):
        state = (state + _GOLDEN) & _MASK
        z = _mix64(state)
        r = j + z % (d - j)
        fbuf[j], fbuf[r] = fbuf[r], fbuf[j]
    return fbuf[:ncand]


def _fit_one(X, y, rows, seed, mtry, nodesize):
    """Fit a single tree; returns (feature, threshold, left, right, value, count)."""
    m0 = rows.shape[0]
    d = X.shape[1]
    loc = np.array(rows, dtype=np.int64)
    ly = y[loc]

    cap = 2 * m0 + 1
    feat = np.full(cap, -1, dtype=np.int32)
    thr = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    val = np.zeros(cap, dtype=np.float64)
    cnt = np.zeros(cap, dtype=np.int32)

    n_nodes = 1
    stack = [(0, m0, 0, 1)]  # (start, end, node index, heap node id)
    while stack:
        start, end, q, nid = stack.pop()
        m = end - start
        seg_y = ly[start:end]
        val[q] = seg_y.cumsum()[-1] / m
        cnt[q] = m
        if m < 2 * nodesize or seg_y.min() == seg_y.max():
            continue

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        seg_rows = loc[start:end]
        s_grid = np.arange(nodesize, m - nodesize + 1)
        for f in _draw_features(seed, nid, d, mtry):
            sv = X[seg_rows, f]
            order = np.argsort(sv, kind="stable")
            svs = sv[order]
            cum = np.cumsum(seg_y[order])
            tot = cum[-1]
            gl = cum[s_grid - 1]
            gain = gl * gl / s_grid + (tot - gl) * (tot - gl) / (m - s_grid)
            gain -= tot * tot / m
            gain = np.where(svs[s_grid - 1] < svs[s_grid], gain, -np.inf)
            j = int(np.argmax(gain))  # first max: smallest threshold on ties
            fg = gain[j]
            if fg > best_gain or (fg == best_gain and best_f >= 0 and f < best_f):
                s = int(s_grid[j])
                best_gain = float(fg)
                best_f = f
                best_thr = (svs[s - 1] + svs[s]) / 2.0
        if best_f < 0:
            continue

        mask = X[seg_rows, best_f] <= best_thr
        nl = int(mask.sum())
        loc[start:end] = np.concatenate([seg_rows[mask], seg_rows[~mask]])
        ly[start:end] = np.concatenate([seg_y[mask], seg_y[~mask]])

        feat[q] = best_f
        thr[q] = best_thr
        li, ri = n_nodes, n_nodes + 1
        left[q] = li
        right[q] = ri
        n_nodes += 2
        stack.append((start + nl, end, ri, (2 * nid + 1) & _MASK))
        stack.append((start, start + nl, li, (2 * nid) & _MASK))

    sl = slice(0, n_nodes)
    return feat[sl], thr[sl], left[sl], right[sl], val[sl], cnt[sl]


def fit_forest_arrays(X, y, rows, seeds, mtry, nodesize):
    """Fit one tree per row set; returns concatenated flat arrays + offsets."""
    n_trees = rows.shape[0]
    parts = []
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    for t in range(n_trees):
        arrs = _fit_one(X, y, rows[t], int(seeds[t]), mtry, nodesize)
        parts.append(arrs)
        offsets[t + 1] = offsets[t] + arrs[0].shape[0]
    cat = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    return dict(
        feature=cat[0],
        threshold=cat[1],
        left=cat[2],
        right=cat[3],
        value=cat[4],
        count=cat[5],
        offsets=offsets,
    )


def predict_forest_arrays(feature, threshold, left, right, value, offsets, XQ):
    """Predictions of every tree at every query row: shape (n_trees, n_query)."""
    n_trees = offsets.shape[0] - 1
    nq = XQ.shape[0]
    out = np.empty((n_trees, nq), dtype=np.float64)
    qidx = np.arange(nq)
    for t in range(n_trees):
        base = offsets[t]
        cur = np.zeros(nq, dtype=np.int64)
        while True:
            f = feature[base + cur]
            active = f >= 0
            if not active.any():
                break
            ca = cur[active]
            go_left = XQ[qidx[active], f[active]] <= threshold[base + ca]
            cur[active] = np.where(go_left, left[base + ca], right[base + ca])
        out[t] = value[base + cur]
    return out
