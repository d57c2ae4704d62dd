"""Compiled inner loops: grid scans, selection, and per-point median updates.

Everything here works on plain arrays so the public modules can stay
readable. Loops over points are embarrassingly parallel and every point
writes only its own output slot, which keeps results independent of the
number of threads.
"""

import numpy as np
from numba import config, njit, prange

# the TBB layer shipped with some wheels is too old; prefer OpenMP/workqueue
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_CHUNK = 512
_SMALL = 64


# ---------------------------------------------------------------------------
# uniform grid scans
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _cell_coord(x, lo, cell, m):
    c = int(np.floor((x - lo) / cell))
    if c < 0:
        c = 0
    elif c >= m:
        c = m - 1
    return c


@njit(cache=True)
def _dist2(a, b, periodic):
    s = 0.0
    for k in range(a.shape[0]):
        dx = abs(a[k] - b[k])
        if periodic and dx > 0.5:
            dx = 1.0 - dx
        s += dx * dx
    return s


@njit(cache=True)
def _scan(q, pos_sorted, order, cell_start, lo, cell, m, strides, offsets,
          periodic, r_in2, r_out2, closed_inner, out):
    """Count (and, if ``out`` is non-empty, write) indices in the shell."""
    d = q.shape[0]
    base = np.empty(d, np.int64)
    for k in range(d):
        base[k] = _cell_coord(q[k], lo[k], cell[k], m[k])
    write = out.shape[0] > 0
    cnt = 0
    for o in range(offsets.shape[0]):
        lin = 0
        ok = True
        for k in range(d):
            c = base[k] + offsets[o, k]
            if periodic:
                c = c % m[k]
            elif c < 0 or c >= m[k]:
                ok = False
                break
            lin += c * strides[k]
        if not ok:
            continue
        for j in range(cell_start[lin], cell_start[lin + 1]):
            dd = _dist2(q, pos_sorted[j], periodic)
            if dd > r_out2:
                continue
            if closed_inner:
                if dd < r_in2:
                    continue
            elif dd <= r_in2:
                continue
            if write:
                out[cnt] = order[j]
            cnt += 1
    return cnt


@njit(cache=True, parallel=True)
def count_shell(qpos, pos_sorted, order, cell_start, lo, cell, m, strides,
                offsets, periodic, r_in2, r_out2, closed_inner):
    n = qpos.shape[0]
    counts = np.zeros(n, np.int64)
    dummy = np.empty(0, np.int32)
    for i in prange(n):
        counts[i] = _scan(qpos[i], pos_sorted, order, cell_start, lo, cell, m,
                          strides, offsets, periodic, r_in2, r_out2,
                          closed_inner, dummy)
    return counts


@njit(cache=True, parallel=True)
def fill_shell(qpos, pos_sorted, order, cell_start, lo, cell, m, strides,
               offsets, periodic, r_in2, r_out2, closed_inner, rowmap, indptr,
               indices):
    """Write query ``i``'s shell, sorted, into CSR row ``rowmap[i]``."""
    n = qpos.shape[0]
    for i in prange(n):
        w = rowmap[i]
        row = indices[indptr[w]:indptr[w + 1]]
        _scan(qpos[i], pos_sorted, order, cell_start, lo, cell, m, strides,
              offsets, periodic, r_in2, r_out2, closed_inner, row)
        row.sort()


@njit(cache=True, parallel=True)
def pair_sums(values, pos_sorted, order, cell_start, lo, cell, m, strides,
              offsets, periodic, r_in2, r_out2, closed_inner, power, table_r,
              table_k):
    """Per-point ``sum_y w(|x-y|) |u(x) - u(y)|**power`` over the shell.

    Points are visited in cell order for locality. ``table_r``/``table_k``
    tabulate the radial weight; an empty table means unit weight.
    """
    n = pos_sorted.shape[0]
    d = pos_sorted.shape[1]
    vs = np.empty(n, np.float64)
    for j in range(n):
        vs[j] = values[order[j]]
    out = np.zeros(n, np.float64)
    use_table = table_r.shape[0] > 0
    for i in prange(n):
        q = pos_sorted[i]
        base = np.empty(d, np.int64)
        for k in range(d):
            base[k] = _cell_coord(q[k], lo[k], cell[k], m[k])
        acc = 0.0
        ui = vs[i]
        for o in range(offsets.shape[0]):
            lin = 0
            ok = True
            for k in range(d):
                c = base[k] + offsets[o, k]
                if periodic:
                    c = c % m[k]
                elif c < 0 or c >= m[k]:
                    ok = False
                    break
                lin += c * strides[k]
            if not ok:
                continue
            for j in range(cell_start[lin], cell_start[lin + 1]):
                dd = _dist2(q, pos_sorted[j], periodic)
                if dd > r_out2:
                    continue
                if closed_inner:
                    if dd < r_in2:
                        continue
                elif dd <= r_in2:
                    continue
                diff = abs(ui - vs[j])
                if power == 2:
                    term = diff * diff
                else:
                    term = diff
                if use_table:
                    term *= np.interp(np.sqrt(dd), table_r, table_k)
                acc += term
        out[order[i]] = acc
    return out


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------

@njit(cache=True)
def _insertion_sort(a, lo, hi):
    for i in range(lo + 1, hi):
        v = a[i]
        j = i - 1
        while j >= lo and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


@njit(cache=True)
def _partition3(a, lo, hi, pivot):
    """Dutch-flag partition of a[lo:hi]; returns (lt, gt) bounds of == block."""
    lt = lo
    i = lo
    gt = hi
    while i < gt:
        v = a[i]
        if v < pivot:
            a[i] = a[lt]
            a[lt] = v
            lt += 1
            i += 1
        elif v > pivot:
            gt -= 1
            a[i] = a[gt]
            a[gt] = v
        else:
            i += 1
    return lt, gt


@njit(cache=True)
def _mom_pivot(a, lo, hi):
    """Median of the group-of-five medians.

    The medians are sorted rather than selected recursively (numba's cache
    does not cope with mutually recursive functions). The pivot still
    splits off at least 30% on each side.
    """
    n = hi - lo
    ngroups = (n + 4) // 5
    meds = np.empty(ngroups, a.dtype)
    g = np.empty(5, a.dtype)
    for t in range(ngroups):
        s = lo + 5 * t
        e = min(s + 5, hi)
        w = e - s
        for u in range(w):
            g[u] = a[s + u]
        _insertion_sort(g, 0, w)
        meds[t] = g[(w - 1) // 2]
    meds.sort()
    return meds[(ngroups - 1) // 2]


@njit(cache=True)
def _select_inplace(a, k, budget=-1):
    """k-th smallest (0-based) of ``a``; ``a`` is permuted in place.

    Random pivots first; after ``budget`` rounds (default 2*log2(n) + 1)
    without finishing, switch to median-of-medians pivots so the worst case
    stays O(n log n).
    """
    lo = 0
    hi = a.shape[0]
    n = hi
    if budget < 0:
        budget = 2 * int(np.log2(max(n, 2))) + 1
    state = np.uint64(0x9E3779B97F4A7C15) ^ np.uint64(n)
    rounds = 0
    while True:
        w = hi - lo
        if w <= _SMALL:
            _insertion_sort(a, lo, hi)
            return a[k]
        if rounds < budget:
            state ^= state << np.uint64(13)
            state ^= state >> np.uint64(7)
            state ^= state << np.uint64(17)
            pivot = a[lo + int(state % np.uint64(w))]
        else:
            pivot = _mom_pivot(a, lo, hi)
        lt, gt = _partition3(a, lo, hi, pivot)
        if k < lt:
            hi = lt
        elif k >= gt:
            lo = gt
        else:
            return pivot
        rounds += 1


@njit(cache=True)
def select_kth(values, k):
    """k-th smallest (0-based) without modifying ``values``."""
    buf = values.copy()
    return _select_inplace(buf, k)


@njit(cache=True)
def rank_from_p(n, p):
    """1-based rank of the p-median among n values.

    Smallest k with (2k - n)/n >= p, clamped to [1, n].  The float test is
    the same expression a brute-force scan evaluates, so both agree exactly.
    """
    k = int(np.ceil(n * (1.0 + p) / 2.0))
    if k < 1:
        k = 1
    if k > n:
        k = n
    while k > 1 and (2.0 * (k - 1) - n) / n >= p:
        k -= 1
    while k < n and (2.0 * k - n) / n < p:
        k += 1
    return k


# ---------------------------------------------------------------------------
# per-point scheme updates
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def median_update(values, indptr, indices, pvals, active, out, empty_flags):
    """out[i] = p-median of values over row i, for every i in ``active``."""
    na = active.shape[0]
    nchunks = (na + _CHUNK - 1) // _CHUNK
    maxdeg = 0
    for t in range(indptr.shape[0] - 1):
        w = indptr[t + 1] - indptr[t]
        if w > maxdeg:
            maxdeg = w
    for c in prange(nchunks):
        buf = np.empty(max(maxdeg, 1), values.dtype)
        for a in range(c * _CHUNK, min((c + 1) * _CHUNK, na)):
            i = active[a]
            s = indptr[i]
            n = indptr[i + 1] - s
            if n == 0:
                out[i] = values[i]
                empty_flags[i] = 1
                continue
            for t in range(n):
                buf[t] = values[indices[s + t]]
            k = rank_from_p(n, pvals[i])
            out[i] = _select_inplace(buf[:n], k - 1)


@njit(cache=True, parallel=True)
def binary_update(values, indptr, indices, pvals, active, out, empty_flags):
    """Fast path of ``median_update`` for fields taking only values 0 and 1."""
    na = active.shape[0]
    for a in prange(na):
        i = active[a]
        s = indptr[i]
        n = indptr[i + 1] - s
        if n == 0:
            out[i] = values[i]
            empty_flags[i] = 1
            continue
        ones = 0
        for t in range(s, s + n):
            if values[indices[t]] != 0.0:
                ones += 1
        k = rank_from_p(n, pvals[i])
        out[i] = 0.0 if (n - ones) >= k else 1.0


@njit(cache=True)
def weighted_pmedian_sorted(vals, wts, p):
    """Infimum m with p <= sum w sign(m - v) / sum w, for vals sorted."""
    total = 0.0
    for t in range(wts.shape[0]):
        total += wts[t]
    cum = 0.0
    n = vals.shape[0]
    t = 0
    while t < n:
        v = vals[t]
        while t < n and vals[t] == v:
            cum += wts[t]
            t += 1
        if (2.0 * cum - total) / total >= p:
            return v
    return vals[n - 1]


@njit(cache=True, parallel=True)
def weighted_update(values, indptr, indices, edge_weight, node_weight, pvals,
                    active, out, empty_flags):
    """Weighted p-median with pair weight k(x, y) (g(x) + g(y)) / 2."""
    na = active.shape[0]
    for a in prange(na):
        i = active[a]
        s = indptr[i]
        n = indptr[i + 1] - s
        if n == 0:
            out[i] = values[i]
            empty_flags[i] = 1
            continue
        vals = np.empty(n, np.float64)
        wts = np.empty(n, np.float64)
        for t in range(n):
            j = indices[s + t]
            vals[t] = values[j]
            wts[t] = edge_weight[s + t] * 0.5 * (node_weight[i] + node_weight[j])
        perm = np.argsort(vals, kind="mergesort")
        tot = 0.0
        for t in range(n):
            tot += wts[t]
        if tot <= 0.0:
            out[i] = values[i]
            empty_flags[i] = 1
            continue
        out[i] = weighted_pmedian_sorted(vals[perm], wts[perm], pvals[i])


@njit(cache=True, parallel=True)
def mark_rows(indptr, indices, rows, n):
    """Boolean mask of every column appearing in the given rows."""
    mask = np.zeros(n, np.bool_)
    for a in prange(rows.shape[0]):
        i = rows[a]
        for t in range(indptr[i], indptr[i + 1]):
            mask[indices[t]] = True
    return mask
