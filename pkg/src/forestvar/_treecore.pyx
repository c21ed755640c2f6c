# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled tree kernels (hot path).

Mirror of ``_treecore_py``: identical algorithm, identical floating-point
operation order, identical RNG, so the two backends produce bitwise-equal
trees and predictions.  See the pure-Python module for the encoding and the
determinism constraints.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy

cnp.import_array()

BACKEND_NAME = "compiled"

ctypedef cnp.uint64_t u64
ctypedef cnp.int64_t i64
ctypedef cnp.int32_t i32
ctypedef cnp.float64_t f64

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL
cdef u64 MIX1 = 0xBF58476D1CE4E5B9ULL
cdef u64 MIX2 = 0x94D049BB133111EBULL


cdef inline u64 mix64(u64 z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef void stable_argsort(f64* key, i32* idx, i32* tmp, int m) nogil:
    """Bottom-up stable mergesort of idx (pre-filled 0..m-1) by key."""
    cdef int width = 1
    cdef int i, lo, mid, hi, a, b, t
    while width < m:
        i = 0
        while i < m:
            lo = i
            mid = i + width
            hi = i + 2 * width
            if mid > m:
                mid = m
            if hi > m:
                hi = m
            a = lo
            b = mid
            t = lo
            while a < mid and b < hi:
                if key[idx[a]] <= key[idx[b]]:
                    tmp[t] = idx[a]
                    a += 1
                else:
                    tmp[t] = idx[b]
                    b += 1
                t += 1
            while a < mid:
                tmp[t] = idx[a]
                a += 1
                t += 1
            while b < hi:
                tmp[t] = idx[b]
                b += 1
                t += 1
            i += 2 * width
        memcpy(idx, tmp, m * sizeof(i32))
        width *= 2


cdef int fit_one(
    const f64[:, ::1] X,
    const f64[::1] y,
    const i64[::1] rows,
    u64 seed,
    int mtry,
    int nodesize,
    # per-tree scratch, all length >= k (fbuf length >= d)
    i64[::1] loc,
    f64[::1] ly,
    f64[::1] sv,
    f64[::1] svs,
    f64[::1] sys,
    f64[::1] cum,
    i32[::1] idx,
    i32[::1] idxtmp,
    i32[::1] fbuf,
    i64[::1] prt_rows,
    f64[::1] prt_vals,
    i64[::1] stk_start,
    i64[::1] stk_end,
    i64[::1] stk_node,
    u64[::1] stk_nid,
    # output block (capacity 2k+1)
    i32[::1] o_feat,
    f64[::1] o_thr,
    i32[::1] o_left,
    i32[::1] o_right,
    f64[::1] o_val,
    i32[::1] o_cnt,
) nogil:
    cdef int m0 = <int>rows.shape[0]
    cdef int d = <int>X.shape[1]
    cdef int n_nodes = 1
    cdef int sp = 0
    cdef int start, end, q, m, i, j, f, ncand, s, nl, nr, li, ri, jbest
    cdef u64 nid, state, z
    cdef f64 tot, seg_min, seg_max, node_term, gl, gr, gain, fbest, fthr
    cdef f64 best_gain, best_thr, v
    cdef int best_f

    for i in range(m0):
        loc[i] = rows[i]
        ly[i] = y[rows[i]]

    stk_start[0] = 0
    stk_end[0] = m0
    stk_node[0] = 0
    stk_nid[0] = 1
    sp = 1

    while sp > 0:
        sp -= 1
        start = <int>stk_start[sp]
        end = <int>stk_end[sp]
        q = <int>stk_node[sp]
        nid = stk_nid[sp]
        m = end - start

        tot = 0.0
        seg_min = ly[start]
        seg_max = ly[start]
        for i in range(start, end):
            v = ly[i]
            tot += v
            if v < seg_min:
                seg_min = v
            if v > seg_max:
                seg_max = v
        o_val[q] = tot / m
        o_cnt[q] = m
        o_feat[q] = -1
        o_left[q] = -1
        o_right[q] = -1
        o_thr[q] = 0.0
        if m < 2 * nodesize or seg_min == seg_max:
            continue

        # per-node feature draws: partial Fisher-Yates keyed by (seed, nid)
        state = mix64(seed ^ mix64(nid))
        for i in range(d):
            fbuf[i] = i
        ncand = mtry if mtry < d else d
        for j in range(ncand):
            state = state + GOLDEN
            z = mix64(state)
            i = j + <int>(z % <u64>(d - j))
            f = fbuf[j]
            fbuf[j] = fbuf[i]
            fbuf[i] = f

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for j in range(ncand):
            f = fbuf[j]
            for i in range(m):
                sv[i] = X[loc[start + i], f]
                idx[i] = i
            stable_argsort(&sv[0], &idx[0], &idxtmp[0], m)
            for i in range(m):
                svs[i] = sv[idx[i]]
                sys[i] = ly[start + idx[i]]
            tot = 0.0
            for i in range(m):
                tot += sys[i]
                cum[i] = tot
            node_term = tot * tot / m
            fbest = 0.0
            fthr = 0.0
            jbest = -1
            for s in range(nodesize, m - nodesize + 1):
                if svs[s - 1] < svs[s]:
                    gl = cum[s - 1]
                    gr = tot - gl
                    gain = gl * gl / s + gr * gr / (m - s) - node_term
                    if jbest < 0 or gain > fbest:
                        fbest = gain
                        fthr = (svs[s - 1] + svs[s]) / 2.0
                        jbest = s
            if jbest < 0:
                continue
            if fbest > best_gain or (fbest == best_gain and best_f >= 0 and f < best_f):
                best_gain = fbest
                best_f = f
                best_thr = fthr
        if best_f < 0:
            continue

        # stable partition of [start, end) by x <= threshold
        nl = 0
        nr = 0
        for i in range(start, end):
            if X[loc[i], best_f] <= best_thr:
                prt_rows[nl] = loc[i]
                prt_vals[nl] = ly[i]
                nl += 1
        for i in range(start, end):
            if not (X[loc[i], best_f] <= best_thr):
                prt_rows[nl + nr] = loc[i]
                prt_vals[nl + nr] = ly[i]
                nr += 1
        for i in range(m):
            loc[start + i] = prt_rows[i]
            ly[start + i] = prt_vals[i]

        o_feat[q] = best_f
        o_thr[q] = best_thr
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        o_left[q] = li
        o_right[q] = ri
        stk_start[sp] = start + nl
        stk_end[sp] = end
        stk_node[sp] = ri
        stk_nid[sp] = 2 * nid + 1
        sp += 1
        stk_start[sp] = start
        stk_end[sp] = start + nl
        stk_node[sp] = li
        stk_nid[sp] = 2 * nid
        sp += 1

    return n_nodes


def fit_forest_arrays(X, y, rows, seeds, int mtry, int nodesize):
    """Fit one tree per row set; returns concatenated flat arrays + offsets."""
    cdef const f64[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const f64[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    rows_arr = np.ascontiguousarray(rows, dtype=np.int64)
    seeds_arr = np.ascontiguousarray(seeds, dtype=np.uint64)
    cdef const i64[:, ::1] rowsv = rows_arr
    cdef const u64[::1] seedsv = seeds_arr

    cdef Py_ssize_t n_trees = rows_arr.shape[0]
    cdef int k = <int>rows_arr.shape[1]
    cdef int d = <int>Xv.shape[1]
    cdef Py_ssize_t tree_cap = 2 * k + 1

    loc = np.empty(k, dtype=np.int64)
    lyv = np.empty(k, dtype=np.float64)
    sv = np.empty(k, dtype=np.float64)
    svs = np.empty(k, dtype=np.float64)
    sys_ = np.empty(k, dtype=np.float64)
    cum = np.empty(k, dtype=np.float64)
    idx = np.empty(k, dtype=np.int32)
    idxtmp = np.empty(k, dtype=np.int32)
    fbuf = np.empty(d, dtype=np.int32)
    prt_rows = np.empty(k, dtype=np.int64)
    prt_vals = np.empty(k, dtype=np.float64)
    stk_start = np.empty(tree_cap + 2, dtype=np.int64)
    stk_end = np.empty(tree_cap + 2, dtype=np.int64)
    stk_node = np.empty(tree_cap + 2, dtype=np.int64)
    stk_nid = np.empty(tree_cap + 2, dtype=np.uint64)

    t_feat = np.empty(tree_cap, dtype=np.int32)
    t_thr = np.empty(tree_cap, dtype=np.float64)
    t_left = np.empty(tree_cap, dtype=np.int32)
    t_right = np.empty(tree_cap, dtype=np.int32)
    t_val = np.empty(tree_cap, dtype=np.float64)
    t_cnt = np.empty(tree_cap, dtype=np.int32)

    cdef Py_ssize_t cap = 64 + 8 * n_trees
    if cap > n_trees * tree_cap + 1:
        cap = n_trees * tree_cap + 1
    feature = np.empty(cap, dtype=np.int32)
    threshold = np.empty(cap, dtype=np.float64)
    left = np.empty(cap, dtype=np.int32)
    right = np.empty(cap, dtype=np.int32)
    value = np.empty(cap, dtype=np.float64)
    count = np.empty(cap, dtype=np.int32)
    offsets = np.zeros(n_trees + 1, dtype=np.int64)

    cdef Py_ssize_t total = 0
    cdef Py_ssize_t t
    cdef int nn
    for t in range(n_trees):
        nn = fit_one(
            Xv, yv, rowsv[t], seedsv[t], mtry, nodesize,
            loc, lyv, sv, svs, sys_, cum, idx, idxtmp, fbuf,
            prt_rows, prt_vals, stk_start, stk_end, stk_node, stk_nid,
            t_feat, t_thr, t_left, t_right, t_val, t_cnt,
        )
        if total + nn > cap:
            cap = max(2 * cap, total + nn)
            feature = np.concatenate([feature[:total], np.empty(cap - total, np.int32)])
            threshold = np.concatenate([threshold[:total], np.empty(cap - total, np.float64)])
            left = np.concatenate([left[:total], np.empty(cap - total, np.int32)])
            right = np.concatenate([right[:total], np.empty(cap - total, np.int32)])
            value = np.concatenate([value[:total], np.empty(cap - total, np.float64)])
            count = np.concatenate([count[:total], np.empty(cap - total, np.int32)])
        feature[total:total + nn] = t_feat[:nn]
        threshold[total:total + nn] = t_thr[:nn]
        left[total:total + nn] = t_left[:nn]
        right[total:total + nn] = t_right[:nn]
        value[total:total + nn] = t_val[:nn]
        count[total:total + nn] = t_cnt[:nn]
        total += nn
        offsets[t + 1] = total

    return dict(
        feature=feature[:total].copy(),
        threshold=threshold[:total].copy(),
        left=left[:total].copy(),
        right=right[:total].copy(),
        value=value[:total].copy(),
        count=count[:total].copy(),
        offsets=offsets,
    )


def predict_forest_arrays(feature, threshold, left, right, value, offsets, XQ):
    """Predictions of every tree at every query row: shape (n_trees, n_query)."""
    cdef const i32[::1] featv = np.ascontiguousarray(feature, dtype=np.int32)
    cdef const f64[::1] thrv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const i32[::1] leftv = np.ascontiguousarray(left, dtype=np.int32)
    cdef const i32[::1] rightv = np.ascontiguousarray(right, dtype=np.int32)
    cdef const f64[::1] valv = np.ascontiguousarray(value, dtype=np.float64)
    cdef const i64[::1] offv = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const f64[:, ::1] Xq = np.ascontiguousarray(XQ, dtype=np.float64)

    cdef Py_ssize_t n_trees = offv.shape[0] - 1
    cdef Py_ssize_t nq = Xq.shape[0]
    out = np.empty((n_trees, nq), dtype=np.float64)
    cdef f64[:, ::1] outv = out
    cdef Py_ssize_t t, p
    cdef i64 base
    cdef int node, f
    with nogil:
        for t in range(n_trees):
            base = offv[t]
            for p in range(nq):
                node = 0
                f = featv[base + node]
                while f >= 0:
                    if Xq[p, f] <= thrv[base + node]:
                        node = leftv[base + node]
                    else:
                        node = rightv[base + node]
                    f = featv[base + node]
                outv[t, p] = valv[base + node]
    return out
