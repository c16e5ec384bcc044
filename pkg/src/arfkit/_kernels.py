"""Compiled kernels: CART growth, leaf routing, split-path bounds.

Everything here is deterministic given its arguments. Feature subsampling
uses an explicit splitmix64 state so results do not depend on thread count
or call order. All float comparisons are strict `<` for thresholds and exact
`==` for categorical codes (codes are small ints stored in float64, so the
equality is safe).
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True, inline="always")
def _mix64(state):
    state = state + GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, nogil=True, inline="always")
def _gini(counts, n, n_classes):
    s = 0.0
    for k in range(n_classes):
        p = counts[k] / n
        s += p * p
    return 1.0 - s


@njit(cache=True, nogil=True)
def best_split_scan(X, y, n_classes, idx, feats, is_cat, n_levels, min_node):
    """Best single split over `feats` for the rows X[idx].

    Candidates: midpoints between consecutive distinct values (continuous),
    one equality literal per observed level (categorical). A split is valid
    when both children hold at least min_node rows and the Gini decrease is
    strictly positive. Ties break toward the lowest feature index, then the
    lowest threshold / level. Returns (feature, value, decrease, n_left),
    feature == -1 when no valid split exists.
    """
    m = idx.shape[0]
    parent = np.zeros(n_classes, np.int64)
    for i in range(m):
        parent[y[idx[i]]] += 1
    parent_g = _gini(parent, m, n_classes)
    best_f = np.int64(-1)
    best_val = 0.0
    best_dec = 0.0
    best_nl = np.int64(0)
    cl = np.zeros(n_classes, np.int64)
    cr = np.zeros(n_classes, np.int64)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        if is_cat[f] != 0:
            n_lv = n_levels[f]
            counts = np.zeros((n_lv, n_classes), np.int64)
            occ = np.zeros(n_lv, np.int64)
            for i in range(m):
                r = idx[i]
                lv = np.int64(X[r, f])
                counts[lv, y[r]] += 1
                occ[lv] += 1
            for lv in range(n_lv):
                nl = occ[lv]
                if nl == 0:
                    continue
                nr = m - nl
                if nl < min_node or nr < min_node:
                    continue
                for k in range(n_classes):
                    cl[k] = counts[lv, k]
                    cr[k] = parent[k] - cl[k]
                dec = (parent_g
                       - (nl / m) * _gini(cl, nl, n_classes)
                       - (nr / m) * _gini(cr, nr, n_classes))
                if dec > best_dec:
                    best_f = f
                    best_val = float(lv)
                    best_dec = dec
                    best_nl = nl
        else:
            v = np.empty(m, np.float64)
            lab = np.empty(m, np.int64)
            for i in range(m):
                r = idx[i]
                v[i] = X[r, f]
                lab[i] = y[r]
            order = np.argsort(v)
            for k in range(n_classes):
                cl[k] = 0
                cr[k] = parent[k]
            nl = np.int64(0)
            for oi in range(m - 1):
                r = order[oi]
                c = lab[r]
                cl[c] += 1
                cr[c] -= 1
                nl += 1
                a = v[r]
                b = v[order[oi + 1]]
                if a == b:
                    continue
                nr = m - nl
                if nl < min_node or nr < min_node:
                    continue
                dec = (parent_g
                       - (nl / m) * _gini(cl, nl, n_classes)
                       - (nr / m) * _gini(cr, nr, n_classes))
                if dec > best_dec:
                    t = 0.5 * (a + b)
                    if t <= a:  # midpoint can round down onto a
                        t = b
                    best_f = f
                    best_val = t
                    best_dec = dec
                    best_nl = nl
    return best_f, best_val, best_dec, best_nl


@njit(cache=True, nogil=True)
def grow_tree_kernel(X, y, n_classes, inbag, is_cat, n_levels,
                     mtry, min_node, max_depth, seed):
    """Grow one CART tree on X[inbag] (multiset, duplicates allowed).

    Depth-first, explicit stack; children are created left first, so leaf
    ids follow a left-to-right depth-first order and the returned `pos`
    array holds the in-bag rows partitioned into contiguous leaf segments.
    max_depth < 0 means unlimited. Returns
    (feature, value, is_cat_split, left, right, leaf_id, pos, leaf_slice).
    """
    nb = inbag.shape[0]
    d = X.shape[1]
    max_nodes = 2 * nb + 1
    feature = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)
    cat_split = np.zeros(max_nodes, np.uint8)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    leaf_id = np.full(max_nodes, -1, np.int64)
    leaf_slice = np.empty((nb, 2), np.int64)
    pos = inbag.copy()
    perm = np.empty(d, np.int64)
    stack = np.empty((max_nodes, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = nb
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    n_leaves = 0
    state = seed
    k_feats = mtry if mtry < d else d
    while top > 0:
        top -= 1
        nid = stack[top, 0]
        s = stack[top, 1]
        e = stack[top, 2]
        depth = stack[top, 3]
        m = e - s
        bf = np.int64(-1)
        bval = 0.0
        if m >= 2 * min_node and (max_depth < 0 or depth < max_depth):
            first = y[pos[s]]
            pure = True
            for i in range(s + 1, e):
                if y[pos[i]] != first:
                    pure = False
                    break
            if not pure:
                for j in range(d):
                    perm[j] = j
                for j in range(d):
                    state, z = _mix64(state)
                    r = j + np.int64(z % np.uint64(d - j))
                    tmp = perm[j]
                    perm[j] = perm[r]
                    perm[r] = tmp
                # Walk the permutation: features constant within the node do
                # not count against mtry, and when the mtry candidates admit
                # no valid split the walk continues until one does — a node
                # only becomes a leaf once splits are exhausted. Equal
                # decreases resolve to the lowest feature index so the tree
                # does not depend on the draw order.
                examined = 0
                bdec = 0.0
                for jj in range(d):
                    f = perm[jj]
                    c0 = X[pos[s], f]
                    const = True
                    for i in range(s + 1, e):
                        if X[pos[i], f] != c0:
                            const = False
                            break
                    if const:
                        continue
                    ff, vv, dd, _ = best_split_scan(
                        X, y, n_classes, pos[s:e], perm[jj:jj + 1],
                        is_cat, n_levels, min_node)
                    examined += 1
                    if ff >= 0 and (bf < 0 or dd > bdec
                                    or (dd == bdec and ff < bf)):
                        bf = ff
                        bval = vv
                        bdec = dd
                    if examined >= k_feats and bf >= 0:
                        break
        if bf < 0:
            leaf_id[nid] = n_leaves
            leaf_slice[n_leaves, 0] = s
            leaf_slice[n_leaves, 1] = e
            n_leaves += 1
        else:
            feature[nid] = bf
            value[nid] = bval
            cat_split[nid] = is_cat[bf]
            i = s
            j2 = e - 1
            if is_cat[bf] != 0:
                while i <= j2:
                    if X[pos[i], bf] == bval:
                        i += 1
                    else:
                        tmp = pos[i]
                        pos[i] = pos[j2]
                        pos[j2] = tmp
                        j2 -= 1
            else:
                while i <= j2:
                    if X[pos[i], bf] < bval:
                        i += 1
                    else:
                        tmp = pos[i]
                        pos[i] = pos[j2]
                        pos[j2] = tmp
                        j2 -= 1
            mid = i
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            left[nid] = lc
            right[nid] = rc
            stack[top, 0] = rc
            stack[top, 1] = mid
            stack[top, 2] = e
            stack[top, 3] = depth + 1
            top += 1
            stack[top, 0] = lc
            stack[top, 1] = s
            stack[top, 2] = mid
            stack[top, 3] = depth + 1
            top += 1
    return (feature[:n_nodes], value[:n_nodes], cat_split[:n_nodes],
            left[:n_nodes], right[:n_nodes], leaf_id[:n_nodes],
            pos, leaf_slice[:n_leaves].copy())


@njit(cache=True, nogil=True)
def route_kernel(X, feature, value, cat_split, left, right, leaf_id):
    """Leaf id for every row of X. `x < t` goes left; `x == level` goes left."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        nid = 0
        while leaf_id[nid] < 0:
            f = feature[nid]
            if cat_split[nid] != 0:
                nid = left[nid] if X[i, f] == value[nid] else right[nid]
            else:
                nid = left[nid] if X[i, f] < value[nid] else right[nid]
        out[i] = leaf_id[nid]
    return out


@njit(cache=True, nogil=True)
def bounds_kernel(feature, value, cat_split, left, right, leaf_id,
                  cont_index, n_cont, lev_offset, n_levels, total_levels,
                  n_leaves):
    """Per-leaf split-path bounds.

    Continuous: half-open [lo, hi) intervals, +/-inf where the path never
    constrains the feature. Categorical: a flat uint8 mask of still-allowed
    levels, laid out per feature at lev_offset. Node ids increase from
    parent to child, so one forward pass suffices.
    """
    n_nodes = feature.shape[0]
    node_lo = np.full((n_nodes, n_cont), -np.inf)
    node_hi = np.full((n_nodes, n_cont), np.inf)
    node_al = np.ones((n_nodes, total_levels), np.uint8)
    for nid in range(n_nodes):
        if leaf_id[nid] >= 0:
            continue
        lc = left[nid]
        rc = right[nid]
        for c in range(n_cont):
            node_lo[lc, c] = node_lo[nid, c]
            node_hi[lc, c] = node_hi[nid, c]
            node_lo[rc, c] = node_lo[nid, c]
            node_hi[rc, c] = node_hi[nid, c]
        for c in range(total_levels):
            node_al[lc, c] = node_al[nid, c]
            node_al[rc, c] = node_al[nid, c]
        f = feature[nid]
        v = value[nid]
        if cat_split[nid] != 0:
            off = lev_offset[f]
            lv = np.int64(v)
            for k in range(n_levels[f]):  # equality pins left, removes right
                if k != lv:
                    node_al[lc, off + k] = 0
            node_al[rc, off + lv] = 0
        else:
            ci = cont_index[f]
            if v < node_hi[lc, ci]:
                node_hi[lc, ci] = v
            if v > node_lo[rc, ci]:
                node_lo[rc, ci] = v
    leaf_lo = np.empty((n_leaves, n_cont))
    leaf_hi = np.empty((n_leaves, n_cont))
    leaf_al = np.empty((n_leaves, total_levels), np.uint8)
    for nid in range(n_nodes):
        lid = leaf_id[nid]
        if lid >= 0:
            for c in range(n_cont):
                leaf_lo[lid, c] = node_lo[nid, c]
                leaf_hi[lid, c] = node_hi[nid, c]
            for c in range(total_levels):
                leaf_al[lid, c] = node_al[nid, c]
    return leaf_lo, leaf_hi, leaf_al
