"""Pure-Python shortest-path kernel; fallback for the compiled extension.

Both backends implement the identical algorithm on identical array inputs:
nodes of one boundary half sorted by (sweep step, node id), forward
neighborhoods read from a per-step CSR index, edge costs

    alpha * NC(v) + gamma * angle_cost + dist_cost ** beta

with the angle cost 0.1 * |90 - atan2(dstep, dr)| in degrees on grid units
and the distance cost the law-of-cosines chord in pixels. Extraction ties
break on the lower node id. The formulas are written so both backends
produce bit-identical floating point results.
"""

import heapq
import math

RAD2DEG = 180.0 / math.pi
INF = float("inf")


def dijkstra_half(
    steps,
    r,
    nc,
    gids,
    col_start,
    next_occ,
    n_steps,
    sources,
    targets,
    dl_bins,
    alpha,
    beta,
    gamma,
    angle_factor,
    cos_table,
):
    """Multi-source / multi-target Dijkstra over one boundary half.

    Returns (best_target_index, dist_list, parent_list); best is -1 when no
    target is reachable. Stops at the first target extracted, which by the
    min-heap invariant carries the global minimum tentative distance.
    """
    n = len(steps)
    steps = [int(v) for v in steps]
    r = [float(v) for v in r]
    nc = [float(v) for v in nc]
    gids = [int(v) for v in gids]
    col_start = [int(v) for v in col_start]
    next_occ = [int(v) for v in next_occ]
    cos_table = [float(v) for v in cos_table]

    dist = [INF] * n
    parent = [-1] * n
    done = [False] * n
    is_target = [False] * n
    for t in targets:
        is_target[int(t)] = True

    heap = []
    for srf in sources:
        u = int(srf)
        dist[u] = 0.0
        heap.append((0.0, gids[u], u))
    heapq.heapify(heap)

    best = -1
    while heap:
        td, _, u = heapq.heappop(heap)
        if done[u] or td > dist[u]:
            continue
        done[u] = True
        if is_target[u]:
            best = u
            break
        s = steps[u]
        if s >= n_steps:
            continue
        lo = col_start[s + 1]
        hi = col_start[min(s + dl_bins, n_steps) + 1]
        if lo == hi:
            b = next_occ[s + 1]
            if b < 0:
                continue
            lo = col_start[b]
            hi = col_start[b + 1]
        r_u = r[u]
        for v in range(lo, hi):
            if done[v]:
                continue
            r_v = r[v]
            dstep = steps[v] - s
            dr = r_v - r_u
            csq = r_v * r_v + r_u * r_u - 2.0 * r_v * r_u * cos_table[dstep]
            cdist = math.sqrt(csq) if csq > 0.0 else 0.0
            ang = angle_factor * abs(90.0 - math.atan2(float(dstep), dr) * RAD2DEG)
            nd = td + alpha * nc[v] + gamma * ang + cdist ** beta
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, gids[v], v))
    return best, dist, parent
