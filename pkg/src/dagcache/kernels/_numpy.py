"""Pure-numpy kernels. Tree recursions run level by level over node depth."""
from __future__ import annotations

import numpy as np

NAME = "numpy"
_TIE = 1e-12


def path_sum(layout, y):
    """Sum of ``y`` over each occurrence and its successors."""
    yf = np.asarray(y, dtype=np.float64)[layout.gid]
    out = np.empty_like(yf)
    for k, idx in enumerate(layout.levels):
        out[idx] = yf[idx] if k == 0 else yf[idx] + out[layout.child[idx]]
    return out


def path_survival(layout, y):
    """Product of ``1 - y`` over each occurrence and its successors."""
    qf = 1.0 - np.asarray(y, dtype=np.float64)[layout.gid]
    out = np.empty_like(qf)
    for k, idx in enumerate(layout.levels):
        out[idx] = qf[idx] if k == 0 else qf[idx] * out[layout.child[idx]]
    return out


def relaxed(layout, y):
    return float(np.sum(layout.weight * np.minimum(1.0, path_sum(layout, y))))


def multilinear(layout, y):
    return float(np.sum(layout.weight * (1.0 - path_survival(layout, y))))


def subtree_sum(layout, values):
    out = np.array(values, dtype=np.float64)
    for idx in reversed(layout.levels[1:]):
        np.add.at(out, layout.child[idx], out[idx])
    return out


def subtree_active(layout, y):
    """Per occurrence: summed cost of itself and predecessors whose min-term is unsaturated."""
    active = layout.cost * (path_sum(layout, y) <= 1.0)
    return subtree_sum(layout, active)


def supergradient(layout, y):
    sub = subtree_active(layout, y)
    return np.bincount(layout.gid, weights=layout.rate * sub, minlength=layout.n_entries)


def _pick(scores, sizes, rank, feasible):
    if not feasible.any():
        return -1
    cand = np.flatnonzero(feasible)
    sc = scores[cand]
    best = sc.max()
    tied = cand[sc >= best - _TIE * max(1.0, abs(best))]
    smallest = sizes[tied].min()
    tied = tied[sizes[tied] == smallest]
    return int(tied[np.argmin(rank[tied])])


def greedy(layout, sizes, capacity, rank, by_density):
    """Greedy knapsack fill; gains are recomputed from scratch every step."""
    n = layout.n_entries
    sizes = np.asarray(sizes, dtype=np.float64)
    covered = np.zeros(layout.n_occurrences, dtype=bool)
    chosen = np.zeros(n, dtype=bool)
    remaining = float(capacity)
    order = []
    while True:
        sub = subtree_sum(layout, np.where(covered, 0.0, layout.weight))
        open_ = ~covered
        gain = np.bincount(layout.gid[open_], weights=sub[open_], minlength=n)
        gain = np.maximum(gain, 0.0)
        if by_density:
            with np.errstate(divide="ignore", invalid="ignore"):
                score = np.where(sizes > 0, gain / np.where(sizes > 0, sizes, 1.0), np.inf)
        else:
            score = gain
        feasible = (~chosen) & (sizes <= remaining + 1e-12 * max(1.0, capacity))
        v = _pick(score, sizes, rank, feasible)
        if v < 0:
            break
        chosen[v] = True
        order.append(v)
        remaining -= sizes[v]
        occ = layout.occ_idx[layout.occ_ptr[v]:layout.occ_ptr[v + 1]]
        for i in occ:
            if not covered[i]:
                covered[i:layout.end[i]] = True
    return np.asarray(order, dtype=np.int64)


def _fill(y_raw, sizes, mu):
    return np.clip(y_raw - mu * sizes, 0.0, 1.0)


def project(y_raw, sizes, capacity, iters=200):
    """Euclidean projection onto {y in [0,1]^n : sizes . y = capacity}.

    Assumes ``0 <= capacity <= sizes.sum()``.
    """
    y_raw = np.asarray(y_raw, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.float64)
    pos = sizes > 0
    if not pos.any():
        return np.clip(y_raw, 0.0, 1.0)
    lo = np.min((y_raw[pos] - 1.0) / sizes[pos])
    hi = np.max(y_raw[pos] / sizes[pos])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if np.dot(sizes, _fill(y_raw, sizes, mid)) > capacity:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    # exact solve on the active set found by bisection
    t = y_raw - mu * sizes
    free = pos & (t > 0.0) & (t < 1.0)
    ones = pos & (t >= 1.0)
    denom = np.dot(sizes[free], sizes[free])
    if denom > 0:
        exact = (np.dot(sizes[free], y_raw[free]) + sizes[ones].sum() - capacity) / denom
        y = _fill(y_raw, sizes, exact)
        if abs(np.dot(sizes, y) - capacity) <= abs(np.dot(sizes, _fill(y_raw, sizes, mu)) - capacity):
            return y
    return _fill(y_raw, sizes, mu)


def pairwise_round(y, sizes, u, eps=1e-12):
    """Size-weighted randomized pairwise rounding; ``u`` supplies uniforms."""
    x = np.array(y, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.float64)
    n = len(x)
    x[x <= eps] = 0.0
    x[x >= 1.0 - eps] = 1.0
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
        a, b = carry, j
        up = min((1.0 - x[a]) * sizes[a], x[b] * sizes[b])
        down = min(x[a] * sizes[a], (1.0 - x[b]) * sizes[b])
        if u[draw] * (up + down) < down:
            x[a] += up / sizes[a]
            x[b] -= up / sizes[b]
        else:
            x[a] -= down / sizes[a]
            x[b] += down / sizes[b]
        draw += 1
        for k in (a, b):
            if x[k] <= eps:
                x[k] = 0.0
            elif x[k] >= 1.0 - eps:
                x[k] = 1.0
        if 0.0 < x[a] < 1.0:
            carry = a
        elif 0.0 < x[b] < 1.0:
            carry = b
        else:
            carry = -1
    if carry >= 0:
        x[carry] = 0.0
    return x
