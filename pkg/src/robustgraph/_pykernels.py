"""Pure numpy implementations of the hot loops.

These define the semantics; ``_ckernels.pyx`` must reproduce them bit for bit.
"""

from __future__ import annotations

import numpy as np

# relative slack when deciding whether a move strictly lowers the objective;
# guards against accepting a zero-gain move because of rounding in lam * int
ACCEPT_RTOL = 1e-9


def krnng_pass(ranks, nbrs, deg, order, lam, rank_sum, sq_sum):
    """One sweep of the greedy re-wiring over the nodes in ``order``.

    ``nbrs`` (N x K) and ``deg`` (N,) are updated in place. Returns the new
    ``(rank_sum, sq_sum, moves)`` where ``moves`` lists ``(node, rank_sum,
    sq_sum)`` after each accepted move.
    """
    n, k = nbrs.shape
    is_nbr = np.zeros(n, dtype=np.int64)
    moves = []
    for i in order:
        i = int(i)
        old = nbrs[i].copy()
        is_nbr[old] = 1
        dstar = deg - is_nbr
        w = ranks[i] + lam * ((dstar + 1) * (dstar + 1)).astype(np.float64)
        w[i] = np.inf
        new = np.argsort(w, kind="stable")[:k]
        is_nbr[old] = 0

        d_rank = int(ranks[i, new].sum()) - int(ranks[i, old].sum())
        lost = np.setdiff1d(old, new, assume_unique=True)
        gained = np.setdiff1d(new, old, assume_unique=True)
        d_sq = int(np.sum(1 - 2 * deg[lost]) + np.sum(2 * deg[gained] + 1))
        delta = d_rank + lam * d_sq
        if delta < -ACCEPT_RTOL * max(1.0, abs(d_rank), abs(lam * d_sq)):
            nbrs[i] = new
            deg[lost] -= 1
            deg[gained] += 1
            rank_sum += d_rank
            sq_sum += d_sq
            moves.append((i, rank_sum, sq_sum))
    return rank_sum, sq_sum, moves


def kruskal_tree(ei, ej, used, n):
    """Minimum spanning tree over the unused edges, visited in the given order.

    ``ei``/``ej`` must already be sorted by length (ties in list order).
    Marks chosen edges in ``used`` and returns their positions, or ``None``
    when the unused edges do not connect all ``n`` nodes.
    """
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    chosen = []
    for pos in np.flatnonzero(~used):
        ra, rb = find(int(ei[pos])), find(int(ej[pos]))
        if ra != rb:
            parent[ra] = rb
            chosen.append(pos)
            if len(chosen) == n - 1:
                break
    if len(chosen) != n - 1:
        return None
    chosen = np.asarray(chosen, dtype=np.int64)
    used[chosen] = True
    return chosen


def prefix_counts(ea, eb, pos):
    """Within-prefix and within-suffix edge counts for every split point.

    ``pos[b, v]`` is the time position (0-based) of node ``v`` under
    permutation ``b``. Returns ``(r1, r2)`` of shape (B, N+1) where
    ``r1[b, t]`` counts edges with both ends at positions < t and
    ``r2[b, t]`` edges with both ends at positions >= t.
    """
    bsz, n = pos.shape
    pa, pb = pos[:, ea], pos[:, eb]
    hi = np.maximum(pa, pb)
    lo = np.minimum(pa, pb)
    offs = (np.arange(bsz) * (n + 1))[:, None]
    # edge enters the prefix at t = hi + 1, leaves the suffix at t = lo + 1
    enter = np.bincount((hi + 1 + offs).ravel(), minlength=bsz * (n + 1)).reshape(bsz, n + 1)
    leave = np.bincount((lo + 1 + offs).ravel(), minlength=bsz * (n + 1)).reshape(bsz, n + 1)
    r1 = np.cumsum(enter, axis=1)
    r2 = len(ea) - np.cumsum(leave, axis=1)
    return r1, r2
