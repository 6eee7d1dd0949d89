"""numba-compiled kernels; same contracts as :mod:`dagcache.kernels._numpy`."""
from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"
_TIE = 1e-12


@njit(cache=True)
def _path_sum(gid, child, y):
    n = gid.shape[0]
    out = np.empty(n)
    for i in range(n):
        c = child[i]
        out[i] = y[gid[i]] + (out[c] if c >= 0 else 0.0)
    return out


@njit(cache=True)
def _path_survival(gid, child, y):
    n = gid.shape[0]
    out = np.empty(n)
    for i in range(n):
        c = child[i]
        q = 1.0 - y[gid[i]]
        out[i] = q * out[c] if c >= 0 else q
    return out


@njit(cache=True)
def _relaxed(gid, child, weight, y):
    s = _path_sum(gid, child, y)
    total = 0.0
    for i in range(gid.shape[0]):
        total += weight[i] * min(1.0, s[i])
    return total


@njit(cache=True)
def _multilinear(gid, child, weight, y):
    p = _path_survival(gid, child, y)
    total = 0.0
    for i in range(gid.shape[0]):
        total += weight[i] * (1.0 - p[i])
    return total


@njit(cache=True)
def _subtree_sum(child, values):
    out = values.copy()
    for i in range(out.shape[0] - 1, -1, -1):
        c = child[i]
        if c >= 0:
            out[c] += out[i]
    return out


@njit(cache=True)
def _subtree_active(gid, child, cost, y):
    s = _path_sum(gid, child, y)
    active = np.empty(gid.shape[0])
    for i in range(gid.shape[0]):
        active[i] = cost[i] if s[i] <= 1.0 else 0.0
    return _subtree_sum(child, active)


@njit(cache=True)
def _supergradient(gid, child, cost, rate, y, n_entries):
    sub = _subtree_active(gid, child, cost, y)
    g = np.zeros(n_entries)
    for i in range(gid.shape[0]):
        g[gid[i]] += rate[i] * sub[i]
    return g


@njit(cache=True)
def _greedy(gid, child, end, weight, occ_ptr, occ_idx, sizes, capacity, rank, by_density):
    n = sizes.shape[0]
    m = gid.shape[0]
    covered = np.zeros(m, dtype=np.bool_)
    g_occ = _subtree_sum(child, weight)  # uncovered weight below each uncovered occurrence
    gain = np.zeros(n)
    for i in range(m):
        gain[gid[i]] += g_occ[i]
    chosen = np.zeros(n, dtype=np.bool_)
    order = np.empty(n, dtype=np.int64)
    count = 0
    remaining = capacity
    slack = 1e-12 * max(1.0, capacity)
    while True:
        # two passes: best score, then tie-break by size and rank
        best = -np.inf
        found = False
        for v in range(n):
            if chosen[v] or sizes[v] > remaining + slack:
                continue
            gv = max(gain[v], 0.0)
            if by_density:
                sc = gv / sizes[v] if sizes[v] > 0 else np.inf
            else:
                sc = gv
            if not found or sc > best:
                best = sc
                found = True
        if not found:
            break
        thresh = best - _TIE * max(1.0, abs(best))
        pick = -1
        for v in range(n):
            if chosen[v] or sizes[v] > remaining + slack:
                continue
            gv = max(gain[v], 0.0)
            if by_density:
                sc = gv / sizes[v] if sizes[v] > 0 else np.inf
            else:
                sc = gv
            if sc < thresh:
                continue
            if pick < 0 or sizes[v] < sizes[pick] or (sizes[v] == sizes[pick] and rank[v] < rank[pick]):
                pick = v
        chosen[pick] = True
        order[count] = pick
        count += 1
        remaining -= sizes[pick]
        # incremental update: only jobs holding an occurrence of pick are touched
        for t in range(occ_ptr[pick], occ_ptr[pick + 1]):
            i = occ_idx[t]
            if covered[i]:
                continue
            d = g_occ[i]
            p = child[i]
            while p >= 0:
                g_occ[p] -= d
                gain[gid[p]] -= d
                p = child[p]
            for u in range(i, end[i]):
                if not covered[u]:
                    gain[gid[u]] -= g_occ[u]
                    g_occ[u] = 0.0
                    covered[u] = True
    return order[:count]


@njit(cache=True)
def _project(y_raw, sizes, capacity, iters):
    n = y_raw.shape[0]
    lo = np.inf
    hi = -np.inf
    any_pos = False
    for i in range(n):
        if sizes[i] > 0:
            any_pos = True
            lo = min(lo, (y_raw[i] - 1.0) / sizes[i])
            hi = max(hi, y_raw[i] / sizes[i])
    out = np.empty(n)
    if not any_pos:
        for i in range(n):
            out[i] = min(1.0, max(0.0, y_raw[i]))
        return out
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        total = 0.0
        for i in range(n):
            total += sizes[i] * min(1.0, max(0.0, y_raw[i] - mid * sizes[i]))
        if total > capacity:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    num = 0.0
    denom = 0.0
    ones = 0.0
    for i in range(n):
        if sizes[i] > 0:
            t = y_raw[i] - mu * sizes[i]
            if t >= 1.0:
                ones += sizes[i]
            elif t > 0.0:
                num += sizes[i] * y_raw[i]
                denom += sizes[i] * sizes[i]
    err_mu = 0.0
    for i in range(n):
        err_mu += sizes[i] * min(1.0, max(0.0, y_raw[i] - mu * sizes[i]))
    err_mu = abs(err_mu - capacity)
    if denom > 0:
        exact = (num + ones - capacity) / denom
        total = 0.0
        for i in range(n):
            out[i] = min(1.0, max(0.0, y_raw[i] - exact * sizes[i]))
            total += sizes[i] * out[i]
        if abs(total - capacity) <= err_mu:
            return out
    for i in range(n):
        out[i] = min(1.0, max(0.0, y_raw[i] - mu * sizes[i]))
    return out


@njit(cache=True)
def _snap(v, eps):
    if v <= eps:
        return 0.0
    if v >= 1.0 - eps:
        return 1.0
    return v


@njit(cache=True)
def _pairwise_round(y, sizes, u, eps):
    x = y.copy()
    n = x.shape[0]
    for i in range(n):
        x[i] = _snap(x[i], eps)
    draw = 0
    carry = -1
    for j in range(n):
        if x[j] == 0.0 or x[j] == 1.0:
            continue
        if sizes[j] <= 0.0:
            x[j] = 1.0 if u[draw] < x[j] else 0.0
            draw += 1
            continue
        if carry < 0:
            carry = j
            continue
        a = carry
        b = j
        up = min((1.0 - x[a]) * sizes[a], x[b] * sizes[b])
        down = min(x[a] * sizes[a], (1.0 - x[b]) * sizes[b])
        if u[draw] * (up + down) < down:
            x[a] += up / sizes[a]
            x[b] -= up / sizes[b]
        else:
            x[a] -= down / sizes[a]
            x[b] += down / sizes[b]
        draw += 1
        x[a] = _snap(x[a], eps)
        x[b] = _snap(x[b], eps)
        if 0.0 < x[a] < 1.0:
            carry = a
        elif 0.0 < x[b] < 1.0:
            carry = b
        else:
            carry = -1
    if carry >= 0:
        x[carry] = 0.0
    return x


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def path_sum(layout, y):
    return _path_sum(layout.gid, layout.child, _f64(y))


def path_survival(layout, y):
    return _path_survival(layout.gid, layout.child, _f64(y))


def relaxed(layout, y):
    return float(_relaxed(layout.gid, layout.child, layout.weight, _f64(y)))


def multilinear(layout, y):
    return float(_multilinear(layout.gid, layout.child, layout.weight, _f64(y)))


def subtree_sum(layout, values):
    return _subtree_sum(layout.child, _f64(values))


def subtree_active(layout, y):
    return _subtree_active(layout.gid, layout.child, layout.cost, _f64(y))


def supergradient(layout, y):
    return _supergradient(layout.gid, layout.child, layout.cost, layout.rate, _f64(y),
                          layout.n_entries)


def greedy(layout, sizes, capacity, rank, by_density):
    return _greedy(layout.gid, layout.child, layout.end, layout.weight, layout.occ_ptr,
                   layout.occ_idx, _f64(sizes), float(capacity),
                   np.ascontiguousarray(rank, dtype=np.int64), bool(by_density))


def project(y_raw, sizes, capacity, iters=200):
    return _project(_f64(y_raw), _f64(sizes), float(capacity), iters)


def pairwise_round(y, sizes, u, eps=1e-12):
    return _pairwise_round(_f64(y), _f64(sizes), _f64(u), eps)
