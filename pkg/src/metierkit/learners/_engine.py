"""Level-wise exact greedy tree growth over presorted columns.

Every level scans each column once in sorted order and evaluates, for all
open nodes at once, every midpoint between consecutive distinct values a
node holds. Candidates are visited column by column, lowest value first,
and replace the incumbent only on strict improvement, so ties go to the
lowest (column, threshold).

Columns whose smallest value fills at least half of the rows (sparse
species weights, rare one-hot levels) skip that block: its statistics are
the node totals minus a pass over the remaining rows. This keeps the
search exact.

Boosting grows its K per-class trees together, so that one pass over a
column serves all of them.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

LEAF = -1
CHUNK = 16  # columns per scan task; fixed so results never depend on n_jobs


class Presorted:
    def __init__(self, X):
        order = np.argsort(X, axis=0, kind="stable")
        self.order = np.ascontiguousarray(order.T.astype(np.int32))
        self.vals = np.ascontiguousarray(np.take_along_axis(X, order, axis=0).T)
        n = X.shape[0]
        if n:
            runs = (self.vals == self.vals[:, :1]).sum(axis=1)
            self.skip = np.where(2 * runs >= n, runs, 0).astype(np.int64)
            self.feats = np.flatnonzero(self.vals[:, 0] < self.vals[:, -1]).astype(np.int64)
        else:
            self.skip = np.zeros(X.shape[1], dtype=np.int64)
            self.feats = np.zeros(0, dtype=np.int64)


presort = Presorted


@njit(nogil=True, cache=True)
def _midpoint(lo, hi):
    t = 0.5 * (lo + hi)
    if t >= hi:
        t = lo
    return t


@njit(nogil=True, cache=True)
def _scan_gini(order, vals, skip, node, y, w, tot, feats, allowed, use_allowed, min_leaf):
    m, K = tot.shape
    n = order.shape[1]
    W = np.zeros(m)
    S2 = np.zeros(m)
    for j in range(m):
        for k in range(K):
            W[j] += tot[j, k]
            S2[j] += tot[j, k] * tot[j, k]
    best = np.full(m, -np.inf)
    bfeat = np.full(m, -1, dtype=np.int64)
    bthr = np.zeros(m)
    cl = np.zeros((m, K))
    wl = np.zeros(m)
    sl2 = np.zeros(m)
    sr2 = np.zeros(m)
    last = np.zeros(m)
    for f in feats:
        start = skip[f]
        cl[:, :] = 0.0
        wl[:] = 0.0
        if start > 0:
            # tail counts first, head block = totals - tail
            for p in range(start, n):
                i = order[f, p]
                j = node[i]
                if j < 0 or (use_allowed and not allowed[j, f]):
                    continue
                cl[j, y[i]] += w[i]
                wl[j] += w[i]
            v0 = vals[f, 0]
            for j in range(m):
                a = 0.0
                b = 0.0
                for k in range(K):
                    r = cl[j, k]
                    cl[j, k] = tot[j, k] - r
                    a += cl[j, k] * cl[j, k]
                    b += r * r
                wl[j] = W[j] - wl[j]
                sl2[j] = a
                sr2[j] = b
                last[j] = v0
        else:
            sl2[:] = 0.0
            sr2[:] = S2
        for p in range(start, n):
            i = order[f, p]
            j = node[i]
            if j < 0:
                continue
            if use_allowed and not allowed[j, f]:
                continue
            v = vals[f, p]
            wr = W[j] - wl[j]
            if wl[j] >= min_leaf and wr >= min_leaf and v > last[j]:
                gain = sl2[j] / wl[j] + sr2[j] / wr - S2[j] / W[j]
                if gain > best[j] + 1e-12 * (1.0 + W[j]):
                    best[j] = gain
                    bfeat[j] = f
                    bthr[j] = _midpoint(last[j], v)
            c = y[i]
            wi = w[i]
            cr = tot[j, c] - cl[j, c]
            sl2[j] += 2.0 * cl[j, c] * wi + wi * wi
            sr2[j] += -2.0 * cr * wi + wi * wi
            cl[j, c] += wi
            wl[j] += wi
            last[j] = v
    return best, bfeat, bthr


@njit(nogil=True, cache=True)
def _scan_newton(order, vals, skip, node, g, h, Gt, Ht, Ct, feats, min_leaf, lam):
    # node, g, h are (n, T): T trees grown side by side, node ids global
    m = Gt.shape[0]
    n = order.shape[1]
    T = node.shape[1]
    parent = Gt * Gt / (Ht + lam)
    best = np.full(m, -np.inf)
    bfeat = np.full(m, -1, dtype=np.int64)
    bthr = np.zeros(m)
    # per node running state, one row each: G left, H left, count left, last value
    acc = np.zeros((m, 4))
    for f in feats:
        start = skip[f]
        acc[:, :] = 0.0
        if start > 0:
            for p in range(start, n):
                i = order[f, p]
                for t in range(T):
                    j = node[i, t]
                    if j >= 0:
                        acc[j, 0] += g[i, t]
                        acc[j, 1] += h[i, t]
                        acc[j, 2] += 1.0
            v0 = vals[f, 0]
            for j in range(m):
                acc[j, 0] = Gt[j] - acc[j, 0]
                acc[j, 1] = Ht[j] - acc[j, 1]
                acc[j, 2] = Ct[j] - acc[j, 2]
                acc[j, 3] = v0
        for p in range(start, n):
            i = order[f, p]
            v = vals[f, p]
            for t in range(T):
                j = node[i, t]
                if j < 0:
                    continue
                gl = acc[j, 0]
                hl = acc[j, 1]
                cl = acc[j, 2]
                if v > acc[j, 3] and cl >= min_leaf and Ct[j] - cl >= min_leaf:
                    gr = Gt[j] - gl
                    hr = Ht[j] - hl
                    gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent[j]
                    if gain > best[j] + 1e-12 * (1.0 + abs(parent[j])):
                        best[j] = gain
                        bfeat[j] = f
                        bthr[j] = _midpoint(acc[j, 3], v)
                acc[j, 0] = gl + g[i, t]
                acc[j, 1] = hl + h[i, t]
                acc[j, 2] = cl + 1.0
                acc[j, 3] = v
    return best, bfeat, bthr


@njit(nogil=True, cache=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        k = 0
        while left[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = k
    return out


def _merge(parts, tol):
    """Combine per-chunk winners in column order (strict improvement)."""
    best, bfeat, bthr = (a.copy() for a in parts[0])
    for b, f, t in parts[1:]:
        upd = b > best + tol
        best[upd], bfeat[upd], bthr[upd] = b[upd], f[upd], t[upd]
    return best, bfeat, bthr


def _chunked(scan, feats, tol, pool):
    chunks = [feats[s : s + CHUNK] for s in range(0, len(feats), CHUNK)] or [feats]
    if pool is None or len(chunks) == 1:
        parts = [scan(c) for c in chunks]
    else:
        parts = list(pool.map(scan, chunks))
    return _merge(parts, tol)


class _Nodes:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def add(self, value):
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.feature) - 1

    def split(self, gid, f, thr, value):
        self.feature[gid] = f
        self.threshold[gid] = thr
        self.left[gid] = self.add(value)
        self.right[gid] = self.add(value)
        return self.left[gid], self.right[gid]

    def arrays(self):
        return {
            "feature": np.array(self.feature, dtype=np.int64),
            "threshold": np.array(self.threshold, dtype=np.float64),
            "left": np.array(self.left, dtype=np.int64),
            "right": np.array(self.right, dtype=np.int64),
            "value": np.array(self.value, dtype=np.float64),
        }


def _depth_cap(max_depth):
    return np.iinfo(np.int64).max if max_depth is None else max_depth


def grow_gini(X, presorted, y, n_classes, *, max_depth, min_leaf, weight=None, max_features=None, rng=None):
    """Grow one classification tree on weighted Gini impurity.

    ``weight`` holds per-row multiplicities (bootstrap counts); rows with
    weight 0 take no part. With ``max_features`` each node draws that many
    candidate columns from ``rng``. Returns ``(arrays, importance)`` where
    importance is the summed weighted impurity decrease per column.
    """
    n, d = X.shape
    w = np.ones(n) if weight is None else np.asarray(weight, dtype=np.float64)
    node = np.where(w > 0, 0, -1).astype(np.int64)
    cap = _depth_cap(max_depth)
    no_allowed = np.zeros((1, 1), dtype=np.bool_)
    nodes = _Nodes()
    importance = np.zeros(d)
    ids = None
    depth = 0
    while True:
        rows = np.flatnonzero(node >= 0)
        if rows.size == 0:
            break
        m = int(node[rows].max()) + 1
        tot = np.bincount(node[rows] * n_classes + y[rows], weights=w[rows], minlength=m * n_classes)
        tot = tot.reshape(m, n_classes)
        W = tot.sum(axis=1)
        values = tot / W[:, None]
        if ids is None:
            ids = [nodes.add(values[0])]
        else:
            for j in range(m):
                nodes.value[ids[j]] = values[j]
        splittable = tot.max(axis=1) < W
        if depth >= cap or not splittable.any():
            break
        tol = 1e-12 * (1.0 + W)
        if max_features is not None and max_features < d:
            keys = rng.random((m, d))
            kth = np.partition(keys, max_features - 1, axis=1)[:, max_features - 1 : max_features]
            allowed, use = keys <= kth, True
        else:
            allowed, use = no_allowed, False

        def scan(feats):
            return _scan_gini(
                presorted.order, presorted.vals, presorted.skip, node, y, w, tot, feats, allowed, use, float(min_leaf)
            )

        best, bfeat, bthr = _chunked(scan, presorted.feats, tol, None)
        do_split = splittable & (bfeat >= 0) & (best >= -tol)
        ids, node = _partition(X, rows, node, do_split, bfeat, bthr, best, ids, nodes, values, importance)
        depth += 1
    return nodes.arrays(), importance


def _partition(X, rows, node, do_split, bfeat, bthr, best, ids, nodes, values, importance):
    m = len(do_split)
    child = np.full((m, 2), -1, dtype=np.int64)
    next_ids = []
    for j in np.flatnonzero(do_split):
        f = int(bfeat[j])
        if importance is not None:
            importance[f] += max(float(best[j]), 0.0)
        lo, hi = nodes.split(ids[j], f, float(bthr[j]), values[j])
        child[j, 0] = len(next_ids)
        child[j, 1] = len(next_ids) + 1
        next_ids += [lo, hi]
    rj = node[rows]
    go = do_split[rj]
    moving = rows[go]
    jm = rj[go]
    right = X[moving, bfeat[jm]] > bthr[jm]
    node = node.copy()
    node[rows[~go]] = -1
    node[moving] = child[jm, right.astype(np.int64)]
    return next_ids, node


def grow_newton(X, presorted, g, h, *, max_depth, min_leaf, lam, pool=None):
    """Grow T regression trees side by side, one per column of ``g``/``h``.

    Leaf weight is ``-G / (H + lam)`` and split gain
    ``GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)``. Returns
    ``(list of arrays, leaf)`` with ``leaf[i, t]`` the leaf of row ``i`` in
    tree ``t``.
    """
    n, d = X.shape
    T = g.shape[1]
    cap = _depth_cap(max_depth)
    g = np.ascontiguousarray(g)
    h = np.ascontiguousarray(h)
    trees = [_Nodes() for _ in range(T)]
    leaf = np.full((n, T), -1, dtype=np.int64)
    # open nodes: per global id -> (tree, id within tree)
    owner = np.zeros(T, dtype=np.int64) + np.arange(T)
    local = [trees[t].add(0.0) for t in range(T)]
    node = np.tile(np.arange(T, dtype=np.int64), (n, 1))
    depth = 0
    while len(owner):
        m = len(owner)
        flat_node = node.ravel()
        valid = flat_node >= 0
        nv = flat_node[valid]
        Gt = np.bincount(nv, weights=g.ravel()[valid], minlength=m)
        Ht = np.bincount(nv, weights=h.ravel()[valid], minlength=m)
        Ct = np.bincount(nv, minlength=m).astype(np.int64)
        values = -Gt / (Ht + lam)
        for j in range(m):
            trees[owner[j]].value[local[j]] = float(values[j])
        lo = np.full(m, np.inf)
        hi = np.full(m, -np.inf)
        np.minimum.at(lo, nv, g.ravel()[valid])
        np.maximum.at(hi, nv, g.ravel()[valid])
        splittable = hi > lo

        cells = np.flatnonzero(valid)
        if depth >= cap or not splittable.any():
            leaf.ravel()[cells] = np.asarray(local, dtype=np.int64)[nv]
            break
        parent = Gt * Gt / (Ht + lam)
        tol = 1e-12 * (1.0 + np.abs(parent))

        def scan(feats):
            return _scan_newton(
                presorted.order, presorted.vals, presorted.skip, node, g, h, Gt, Ht, Ct, feats, float(min_leaf), lam
            )

        best, bfeat, bthr = _chunked(scan, presorted.feats, tol, pool)
        do_split = splittable & (bfeat >= 0) & (best >= -tol)

        new_owner, new_local = [], []
        child = np.full((m, 2), -1, dtype=np.int64)
        for j in np.flatnonzero(do_split):
            t = int(owner[j])
            a, b = trees[t].split(local[j], int(bfeat[j]), float(bthr[j]), 0.0)
            child[j] = (len(new_local), len(new_local) + 1)
            new_owner += [t, t]
            new_local += [a, b]
        stop = ~do_split[nv]
        leaf.ravel()[cells[stop]] = np.asarray(local, dtype=np.int64)[nv[stop]]
        move = cells[~stop]
        jm = nv[~stop]
        right = X[move // T, bfeat[jm]] > bthr[jm]
        new_node = np.full(n * T, -1, dtype=np.int64)
        new_node[move] = child[jm, right.astype(np.int64)]
        node = new_node.reshape(n, T)
        owner = np.array(new_owner, dtype=np.int64)
        local = new_local
        depth += 1
    return [t.arrays() for t in trees], leaf


def thread_pool(n_jobs):
    return ThreadPoolExecutor(max_workers=n_jobs) if n_jobs and n_jobs > 1 else None
