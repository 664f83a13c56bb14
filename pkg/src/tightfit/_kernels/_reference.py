"""Pure-Python reference implementations of the hot kernels.

These mirror the native Cython kernels operation for operation: identical
relaxation rules, identical tie-breaking, identical floating-point order.
The test suite asserts exact agreement between the two lanes, so any change
here must be made in ``_native.pyx`` too.
"""

import heapq

import numpy as np

IS_NATIVE = False


def multi_source_dijkstra(indptr, indices, weights, sources, source_ids, n_nodes,
                          target=-1):
    """Multi-source Dijkstra on a CSR graph with nearest-source tracking.

    Relaxation is lexicographic on (distance, source id): among
    equal-distance paths the lowest source id wins. Returns ``(dist, origin)``
    where unreachable nodes hold ``inf`` / ``-1``. If ``target`` is
    nonnegative the search stops once that node is settled.
    """
    ip = np.asarray(indptr, dtype=np.int64).tolist()
    idx = np.asarray(indices, dtype=np.int64).tolist()
    w = np.asarray(weights, dtype=np.float64).tolist()

    dist = [np.inf] * n_nodes
    origin = [-1] * n_nodes
    heap = []
    for s, sid in zip(np.asarray(sources, dtype=np.int64).tolist(),
                      np.asarray(source_ids, dtype=np.int64).tolist()):
        if 0.0 < dist[s] or (dist[s] == 0.0 and (origin[s] < 0 or sid < origin[s])):
            dist[s] = 0.0
            origin[s] = sid
            heapq.heappush(heap, (0.0, sid, s))

    pop = heapq.heappop
    push = heapq.heappush
    while heap:
        d, o, u = pop(heap)
        if d != dist[u] or o != origin[u]:
            continue
        if u == target:
            break
        for k in range(ip[u], ip[u + 1]):
            v = idx[k]
            nd = d + w[k]
            if nd < dist[v] or (nd == dist[v] and o < origin[v]):
                dist[v] = nd
                origin[v] = o
                push(heap, (nd, o, v))

    return (np.asarray(dist, dtype=np.float64),
            np.asarray(origin, dtype=np.int64))


def _hit_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, t_min):
    # Moller-Trumbore; arithmetic order matches the native kernel exactly.
    px = dy * e2[2] - dz * e2[1]
    py = dz * e2[0] - dx * e2[2]
    pz = dx * e2[1] - dy * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    if -1e-14 < det < 1e-14:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    sx = ox - v0[0]
    sy = oy - v0[1]
    sz = oz - v0[2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < -1e-12 or u > 1.0 + 1e-12:
        return -1.0, 0.0, 0.0
    qx = sy * e1[2] - sz * e1[1]
    qy = sz * e1[0] - sx * e1[2]
    qz = sx * e1[1] - sy * e1[0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -1e-12 or u + v > 1.0 + 1e-12:
        return -1.0, 0.0, 0.0
    t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
    if t <= t_min:
        return -1.0, 0.0, 0.0
    return t, u, v


def raycast(node_min, node_max, node_left, node_right, node_start, node_count,
            prim_order, tri_v0, tri_e1, tri_e2, origins, directions, t_min):
    """Nearest-hit ray casting over a flattened AABB BVH.

    Ties on the hit parameter are broken by the lower face index, making the
    result independent of traversal order. Directions must be unit length so
    ``t`` is a metric distance. Returns ``(t, face, u, v)`` arrays with
    ``t=inf`` / ``face=-1`` on a miss.
    """
    n_rays = origins.shape[0]
    out_t = np.full(n_rays, np.inf)
    out_face = np.full(n_rays, -1, dtype=np.int64)
    out_u = np.zeros(n_rays)
    out_v = np.zeros(n_rays)

    nmin = np.asarray(node_min, dtype=np.float64)
    nmax = np.asarray(node_max, dtype=np.float64)
    left = np.asarray(node_left, dtype=np.int64)
    right = np.asarray(node_right, dtype=np.int64)
    start = np.asarray(node_start, dtype=np.int64)
    count = np.asarray(node_count, dtype=np.int64)
    order = np.asarray(prim_order, dtype=np.int64)

    for r in range(n_rays):
        ox, oy, oz = origins[r]
        dx, dy, dz = directions[r]
        inv_dx = 1.0 / dx if dx != 0.0 else np.inf if dx >= 0 else -np.inf
        inv_dy = 1.0 / dy if dy != 0.0 else np.inf if dy >= 0 else -np.inf
        inv_dz = 1.0 / dz if dz != 0.0 else np.inf if dz >= 0 else -np.inf
        best_t = np.inf
        best_f = -1
        best_u = 0.0
        best_v = 0.0
        stack = [0]
        while stack:
            node = stack.pop()
            # slab test against current best; branch structure mirrors _native
            t0 = (nmin[node, 0] - ox) * inv_dx
            t1 = (nmax[node, 0] - ox) * inv_dx
            if t0 < t1:
                lo, hi = t0, t1
            else:
                lo, hi = t1, t0
            t0 = (nmin[node, 1] - oy) * inv_dy
            t1 = (nmax[node, 1] - oy) * inv_dy
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > lo:
                lo = t0
            if t1 < hi:
                hi = t1
            t0 = (nmin[node, 2] - oz) * inv_dz
            t1 = (nmax[node, 2] - oz) * inv_dz
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > lo:
                lo = t0
            if t1 < hi:
                hi = t1
            if hi < lo or hi < t_min or lo > best_t:
                continue
            if count[node] > 0:
                for k in range(start[node], start[node] + count[node]):
                    f = order[k]
                    t, u, v = _hit_triangle(ox, oy, oz, dx, dy, dz,
                                            tri_v0[f], tri_e1[f], tri_e2[f], t_min)
                    if t > 0.0 and (t < best_t or (t == best_t and f < best_f)):
                        best_t = t
                        best_f = f
                        best_u = u
                        best_v = v
            else:
                stack.append(right[node])
                stack.append(left[node])
        out_t[r] = best_t
        out_face[r] = best_f
        out_u[r] = best_u
        out_v[r] = best_v

    return out_t, out_face, out_u, out_v
