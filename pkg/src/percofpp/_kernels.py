"""Compiled graph kernels over dense lattice boxes.

All kernels work on a flattened d-dimensional box: vertices are flat indices
in lexicographic (row-major) coordinate order, and edge arrays have shape
(d, nv) where entry (k, v) describes the edge from v to its +e_k neighbour.
Flat-index comparisons therefore agree with lexicographic comparisons of
coordinates, which is what the deterministic tie-breaks below rely on.

The shortest-path kernel orders the priority queue by (distance, hop count,
vertex index) and keeps, per vertex, the predecessor minimizing that triple.
The hop count makes the predecessor relation well-founded even when
zero-weight edges create equal-distance cycles, so path extraction always
terminates, and summing weights along the extracted path reproduces the
stored distance bit for bit (each distance was computed as predecessor
distance plus edge weight in that order).
"""

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True, inline="always")
def _less(hd, hh, hv, i, j):
    if hd[i] < hd[j]:
        return True
    if hd[i] > hd[j]:
        return False
    if hh[i] < hh[j]:
        return True
    if hh[i] > hh[j]:
        return False
    return hv[i] < hv[j]


@njit(cache=True, inline="always")
def _swap(hd, hh, hv, i, j):
    hd[i], hd[j] = hd[j], hd[i]
    hh[i], hh[j] = hh[j], hh[i]
    hv[i], hv[j] = hv[j], hv[i]


@njit(cache=True)
def _heap_push(hd, hh, hv, n, dist, hops, vertex):
    i = n
    hd[i] = dist
    hh[i] = hops
    hv[i] = vertex
    while i > 0:
        parent = (i - 1) >> 1
        if _less(hd, hh, hv, i, parent):
            _swap(hd, hh, hv, i, parent)
            i = parent
        else:
            break
    return n + 1


@njit(cache=True)
def _heap_pop(hd, hh, hv, n):
    n -= 1
    _swap(hd, hh, hv, 0, n)
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        m = l
        r = l + 1
        if r < n and _less(hd, hh, hv, r, l):
            m = r
        if _less(hd, hh, hv, m, i):
            _swap(hd, hh, hv, i, m)
            i = m
        else:
            break
    return n


@njit(cache=True)
def _strides(dims):
    d = dims.shape[0]
    strides = np.empty(d, np.int64)
    s = 1
    for k in range(d - 1, -1, -1):
        strides[k] = s
        s *= dims[k]
    return strides


@njit(cache=True)
def dijkstra_grid(dims, weights, mask, sources):
    """Deterministic Dijkstra with (dist, hops, index) priority.

    weights: (d, nv) float64, +inf = absent edge. mask: (nv,) usable vertices.
    Returns (dist, hops, pred); pred is -1 at sources and unreached vertices.
    """
    d = dims.shape[0]
    strides = _strides(dims)
    nv = 1
    for k in range(d):
        nv *= dims[k]

    dist = np.full(nv, INF)
    hops = np.full(nv, np.int64(-1))
    pred = np.full(nv, np.int64(-1))
    done = np.zeros(nv, np.bool_)

    cap = 2 * d * nv + sources.shape[0] + 4
    hd = np.empty(cap)
    hh = np.empty(cap, np.int64)
    hv = np.empty(cap, np.int64)
    hn = 0

    for i in range(sources.shape[0]):
        s = sources[i]
        if mask[s] and dist[s] != 0.0:
            dist[s] = 0.0
            hops[s] = 0
            hn = _heap_push(hd, hh, hv, hn, 0.0, 0, s)

    while hn > 0:
        d0 = hd[0]
        h0 = hh[0]
        v0 = hv[0]
        hn = _heap_pop(hd, hh, hv, hn)
        if done[v0] or d0 != dist[v0] or h0 != hops[v0]:
            continue
        done[v0] = True
        for k in range(d):
            ck = (v0 // strides[k]) % dims[k]
            # +e_k
            if ck + 1 < dims[k]:
                u = v0 + strides[k]
                w = weights[k, v0]
                if w < INF and mask[u] and not done[u]:
                    nd = d0 + w
                    nh = h0 + 1
                    du = dist[u]
                    if nd < du:
                        dist[u] = nd
                        hops[u] = nh
                        pred[u] = v0
                        hn = _heap_push(hd, hh, hv, hn, nd, nh, u)
                    elif nd == du:
                        hu = hops[u]
                        if nh < hu:
                            hops[u] = nh
                            pred[u] = v0
                            hn = _heap_push(hd, hh, hv, hn, nd, nh, u)
                        elif nh == hu and v0 < pred[u]:
                            pred[u] = v0
            # -e_k
            if ck - 1 >= 0:
                u = v0 - strides[k]
                w = weights[k, u]
                if w < INF and mask[u] and not done[u]:
                    nd = d0 + w
                    nh = h0 + 1
                    du = dist[u]
                    if nd < du:
                        dist[u] = nd
                        hops[u] = nh
                        pred[u] = v0
                        hn = _heap_push(hd, hh, hv, hn, nd, nh, u)
                    elif nd == du:
                        hu = hops[u]
                        if nh < hu:
                            hops[u] = nh
                            pred[u] = v0
                            hn = _heap_push(hd, hh, hv, hn, nd, nh, u)
                        elif nh == hu and v0 < pred[u]:
                            pred[u] = v0
    return dist, hops, pred


@njit(cache=True)
def bfs_grid(dims, open_edges, mask, sources, depth_cap):
    """Multi-source BFS over flagged edges; depth_cap < 0 means unlimited.

    Returns (dist, pred): dist = -1 unreached; pred = first discoverer with
    neighbours scanned in (+0,-0,+1,-1,...) order, so extraction is canonical.
    """
    d = dims.shape[0]
    strides = _strides(dims)
    nv = 1
    for k in range(d):
        nv *= dims[k]
    dist = np.full(nv, np.int64(-1))
    pred = np.full(nv, np.int64(-1))
    queue = np.empty(nv, np.int64)
    qh = 0
    qt = 0
    for i in range(sources.shape[0]):
        s = sources[i]
        if mask[s] and dist[s] < 0:
            dist[s] = 0
            queue[qt] = s
            qt += 1
    while qh < qt:
        v0 = queue[qh]
        qh += 1
        d0 = dist[v0]
        if depth_cap >= 0 and d0 >= depth_cap:
            continue
        for k in range(d):
            ck = (v0 // strides[k]) % dims[k]
            if ck + 1 < dims[k]:
                u = v0 + strides[k]
                if open_edges[k, v0] and mask[u] and dist[u] < 0:
                    dist[u] = d0 + 1
                    pred[u] = v0
                    queue[qt] = u
                    qt += 1
            if ck - 1 >= 0:
                u = v0 - strides[k]
                if open_edges[k, u] and mask[u] and dist[u] < 0:
                    dist[u] = d0 + 1
                    pred[u] = v0
                    queue[qt] = u
                    qt += 1
    return dist, pred


@njit(cache=True)
def flood_components(dims, open_edges, mask):
    """Connected components over flagged edges; labels in first-seen (lex) order.

    Returns (labels, count): labels = -1 outside mask; component k is the one
    whose lexicographically smallest vertex is the k-th smallest such minimum.
    """
    d = dims.shape[0]
    strides = _strides(dims)
    nv = 1
    for k in range(d):
        nv *= dims[k]
    labels = np.full(nv, np.int64(-1))
    queue = np.empty(nv, np.int64)
    count = 0
    for start in range(nv):
        if not mask[start] or labels[start] >= 0:
            continue
        labels[start] = count
        queue[0] = start
        qh = 0
        qt = 1
        while qh < qt:
            v0 = queue[qh]
            qh += 1
            for k in range(d):
                ck = (v0 // strides[k]) % dims[k]
                if ck + 1 < dims[k]:
                    u = v0 + strides[k]
                    if open_edges[k, v0] and mask[u] and labels[u] < 0:
                        labels[u] = count
                        queue[qt] = u
                        qt += 1
                if ck - 1 >= 0:
                    u = v0 - strides[k]
                    if open_edges[k, u] and mask[u] and labels[u] < 0:
                        labels[u] = count
                        queue[qt] = u
                        qt += 1
        count += 1
    return labels, count


@njit(cache=True)
def subbox_crossing_scan(dims, open_edges, in_cluster, m):
    """Scan all side-length-m sub-boxes for a crossing sub-cluster inside C.

    A sub-box [a, a+m]^d passes when some connected component of the open
    subgraph induced on it touches both opposite faces in every direction and
    contains at least one vertex of the marked cluster. Returns the flat index
    of the first failing sub-box origin, or -1 when all pass.
    """
    d = dims.shape[0]
    strides = _strides(dims)
    side = m + 1
    ncell = 1
    for k in range(d):
        ncell *= side
    local_strides = np.empty(d, np.int64)
    s = 1
    for k in range(d - 1, -1, -1):
        local_strides[k] = s
        s *= side
    cell_off = np.empty(ncell, np.int64)  # local index -> global flat offset
    for ci in range(ncell):
        off = 0
        for k in range(d):
            off += ((ci // local_strides[k]) % side) * strides[k]
        cell_off[ci] = off
    cell_flat = np.empty(ncell, np.int64)
    seen = np.empty(ncell, np.bool_)
    stack = np.empty(ncell, np.int64)

    # origin ranges
    nori = 1
    for k in range(d):
        nori *= dims[k] - m
    ori_strides = np.empty(d, np.int64)
    s = 1
    for k in range(d - 1, -1, -1):
        ori_strides[k] = s
        s *= dims[k] - m
    for oi in range(nori):
        base = 0
        for k in range(d):
            ok = (oi // ori_strides[k]) % (dims[k] - m)
            base += ok * strides[k]
        for ci in range(ncell):
            cell_flat[ci] = base + cell_off[ci]
            seen[ci] = False
        found = False
        for start in range(ncell):
            if seen[start]:
                continue
            # flood one component within the sub-box
            seen[start] = True
            stack[0] = start
            sn = 1
            touch_lo = np.zeros(d, np.bool_)
            touch_hi = np.zeros(d, np.bool_)
            has_cluster = False
            while sn > 0:
                sn -= 1
                ci = stack[sn]
                g = cell_flat[ci]
                if in_cluster[g]:
                    has_cluster = True
                for k in range(d):
                    lk = (ci // local_strides[k]) % side
                    if lk == 0:
                        touch_lo[k] = True
                    if lk == side - 1:
                        touch_hi[k] = True
                    if lk + 1 < side:
                        cj = ci + local_strides[k]
                        if not seen[cj] and open_edges[k, g]:
                            seen[cj] = True
                            stack[sn] = cj
                            sn += 1
                    if lk - 1 >= 0:
                        cj = ci - local_strides[k]
                        if not seen[cj] and open_edges[k, g - strides[k]]:
                            seen[cj] = True
                            stack[sn] = cj
                            sn += 1
            if has_cluster:
                ok_all = True
                for k in range(d):
                    if not (touch_lo[k] and touch_hi[k]):
                        ok_all = False
                        break
                if ok_all:
                    found = True
                    break
        if not found:
            return base
    return np.int64(-1)


@njit(cache=True)
def local_links_scan(dims, qopen, deep, in_cluster, span, bound):
    """Check short q-chemical distances between nearby marked vertex pairs.

    For every pair (x, y) with deep[x], deep[y], y > x in flat order and
    ||x-y||_inf <= span: the pair passes when the q-distance from x to y is
    <= bound, and fails when both lie in the marked cluster but the capped
    BFS did not reach y. Other unreached pairs pass when the BFS exhausted
    x's whole q-cluster strictly inside the box (then the pair is genuinely
    disconnected) and are otherwise returned for the caller to resolve by
    global labeling.

    Returns (n_violation, witness_x, witness_y, unresolved_pairs).
    """
    d = dims.shape[0]
    strides = _strides(dims)
    nv = 1
    for k in range(d):
        nv *= dims[k]
    queue = np.empty(nv, np.int64)
    dist_buf = np.empty(nv, np.int64)
    stamp_buf = np.zeros(nv, np.int64)
    unresolved = np.empty((256, 2), np.int64)
    n_unres = 0
    n_viol = 0
    wx = np.int64(-1)
    wy = np.int64(-1)
    stamp = 0

    coords = np.empty(d, np.int64)
    ycoords = np.empty(d, np.int64)
    for x in range(nv):
        if not deep[x]:
            continue
        # depth-capped BFS from x over q-open edges
        stamp += 1
        dist_buf[x] = 0
        stamp_buf[x] = stamp
        queue[0] = x
        qh = 0
        qt = 1
        exhausted_inside = True
        while qh < qt:
            v0 = queue[qh]
            qh += 1
            d0 = dist_buf[v0]
            on_face = False
            for k in range(d):
                ck = (v0 // strides[k]) % dims[k]
                if ck == 0 or ck == dims[k] - 1:
                    on_face = True
                    break
            if on_face:
                exhausted_inside = False  # cluster may continue off the box
            if d0 >= bound:
                exhausted_inside = False  # frontier still alive at the cap
                continue
            for k in range(d):
                ck = (v0 // strides[k]) % dims[k]
                if ck + 1 < dims[k]:
                    u = v0 + strides[k]
                    if qopen[k, v0] and stamp_buf[u] != stamp:
                        stamp_buf[u] = stamp
                        dist_buf[u] = d0 + 1
                        queue[qt] = u
                        qt += 1
                if ck - 1 >= 0:
                    u = v0 - strides[k]
                    if qopen[k, u] and stamp_buf[u] != stamp:
                        stamp_buf[u] = stamp
                        dist_buf[u] = d0 + 1
                        queue[qt] = u
                        qt += 1
        for k in range(d):
            coords[k] = (x // strides[k]) % dims[k]
        # iterate y in the l-inf ball of radius span with y > x
        width = 2 * span + 1
        nball = 1
        for k in range(d):
            nball *= width
        for bi in range(nball):
            rem = bi
            inside = True
            for k in range(d):
                off = rem % width - span
                rem //= width
                yk = coords[k] + off
                if yk < 0 or yk >= dims[k]:
                    inside = False
                    break
                ycoords[k] = yk
            if not inside:
                continue
            y = np.int64(0)
            for k in range(d):
                y += ycoords[k] * strides[k]
            if y <= x or not deep[y]:
                continue
            if stamp_buf[y] == stamp and dist_buf[y] <= bound:
                continue
            if in_cluster[x] and in_cluster[y]:
                n_viol += 1
                if wx < 0:
                    wx = x
                    wy = y
            elif exhausted_inside:
                continue  # x's cluster fully explored, y not in it
            else:
                if n_unres >= unresolved.shape[0]:
                    grown = np.empty((unresolved.shape[0] * 2, 2), np.int64)
                    grown[: unresolved.shape[0]] = unresolved
                    unresolved = grown
                unresolved[n_unres, 0] = x
                unresolved[n_unres, 1] = y
                n_unres += 1
    return n_viol, wx, wy, unresolved[:n_unres].copy()


@njit(cache=True)
def enumerate_tight_paths(
    dims,
    weights,
    dist,
    region_mask,
    stop_mask,
    start,
    per_target_cap,
    step_cap,
    out_paths,
    out_offsets,
):
    """Depth-first enumeration of tight-edge paths inside a masked region.

    A step a->b is tight when dist[b] == dist[a] + w(a, b) exactly. Paths
    start at `start`, stay in region_mask, stop (and are recorded) on the
    first vertex with stop_mask. Records vertex sequences into out_paths with
    boundaries in out_offsets. Returns (n_paths, n_steps, overflowed).

    The hop-refined distances make tight cycles impossible except through
    zero-weight ties, which the on-path marking below handles.
    """
    d = dims.shape[0]
    strides = _strides(dims)
    nv = 1
    for k in range(d):
        nv *= dims[k]
    max_depth = nv + 1
    path = np.empty(max_depth, np.int64)
    next_dir = np.empty(max_depth, np.int64)
    on_path = np.zeros(nv, np.bool_)
    hit_count = np.zeros(nv, np.int64)

    n_paths = 0
    n_steps = 0
    out_pos = 0
    overflow = False

    if not region_mask[start]:
        return 0, 0, False
    depth = 0
    path[0] = start
    next_dir[0] = 0
    on_path[start] = True
    if stop_mask[start]:
        return 0, 0, False  # degenerate: start already on the stop shell

    while depth >= 0:
        v0 = path[depth]
        progressed = False
        while next_dir[depth] < 2 * d:
            code = next_dir[depth]
            next_dir[depth] += 1
            k = code >> 1
            ck = (v0 // strides[k]) % dims[k]
            if code & 1 == 0:
                if ck + 1 >= dims[k]:
                    continue
                u = v0 + strides[k]
                w = weights[k, v0]
            else:
                if ck - 1 < 0:
                    continue
                u = v0 - strides[k]
                w = weights[k, u]
            if w == INF or not region_mask[u] or on_path[u]:
                continue
            if dist[u] != dist[v0] + w:
                continue
            n_steps += 1
            if n_steps > step_cap:
                return n_paths, n_steps, True
            if stop_mask[u]:
                hit_count[u] += 1
                if hit_count[u] > per_target_cap:
                    return n_paths, n_steps, True
                if out_pos + depth + 2 > out_paths.shape[0]:
                    return n_paths, n_steps, True
                for i in range(depth + 1):
                    out_paths[out_pos + i] = path[i]
                out_paths[out_pos + depth + 1] = u
                out_pos += depth + 2
                if n_paths >= out_offsets.shape[0]:
                    return n_paths, n_steps, True
                out_offsets[n_paths] = out_pos
                n_paths += 1
                continue
            if depth + 1 >= max_depth:
                return n_paths, n_steps, True
            depth += 1
            path[depth] = u
            next_dir[depth] = 0
            on_path[u] = True
            progressed = True
            break
        if not progressed:
            on_path[v0] = False
            depth -= 1
    return n_paths, n_steps, overflow


@njit(cache=True)
def ball_bitsets(dims, qopen, region_mask, members, offsets, bound, nwords, compact):
    """Per-path q-ball and vertex-set bitsets over compacted region indexing.

    members/offsets encode concatenated vertex lists (flat box indices) of
    each path; compact maps flat box index -> dense region index (or -1).
    Returns (balls, vsets) with shape (n_paths, nwords) uint64.
    """
    d = dims.shape[0]
    strides = _strides(dims)
    nv = 1
    for k in range(d):
        nv *= dims[k]
    n_paths = offsets.shape[0]
    balls = np.zeros((n_paths, nwords), np.uint64)
    vsets = np.zeros((n_paths, nwords), np.uint64)
    dist = np.full(nv, np.int64(-1))
    queue = np.empty(nv, np.int64)
    touched = np.empty(nv, np.int64)
    for pi in range(n_paths):
        lo = 0 if pi == 0 else offsets[pi - 1]
        hi = offsets[pi]
        qh = 0
        qt = 0
        nt = 0
        for i in range(lo, hi):
            v = members[i]
            ci = compact[v]
            vsets[pi, ci >> 6] |= np.uint64(1) << np.uint64(ci & 63)
            if dist[v] < 0:
                dist[v] = 0
                queue[qt] = v
                qt += 1
                touched[nt] = v
                nt += 1
        while qh < qt:
            v0 = queue[qh]
            qh += 1
            d0 = dist[v0]
            ci = compact[v0]
            balls[pi, ci >> 6] |= np.uint64(1) << np.uint64(ci & 63)
            if d0 >= bound:
                continue
            for k in range(d):
                ck = (v0 // strides[k]) % dims[k]
                if ck + 1 < dims[k]:
                    u = v0 + strides[k]
                    if qopen[k, v0] and region_mask[u] and dist[u] < 0:
                        dist[u] = d0 + 1
                        queue[qt] = u
                        qt += 1
                        touched[nt] = u
                        nt += 1
                if ck - 1 >= 0:
                    u = v0 - strides[k]
                    if qopen[k, u] and region_mask[u] and dist[u] < 0:
                        dist[u] = d0 + 1
                        queue[qt] = u
                        qt += 1
                        touched[nt] = u
                        nt += 1
        for i in range(nt):
            dist[touched[i]] = -1
    return balls, vsets


@njit(cache=True)
def pairwise_ball_check(balls, vsets):
    """First pair (i, j) with vset_j disjoint from ball_i, or (-1, -1)."""
    n = balls.shape[0]
    w = balls.shape[1]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            hit = False
            for t in range(w):
                if balls[i, t] & vsets[j, t]:
                    hit = True
                    break
            if not hit:
                return i, j
    return -1, -1


@njit(cache=True)
def tight_reachable(dims, weights, dist, region_mask, stop_mask, start):
    """Whether the stop shell is reachable from start along tight edges
    (dist[b] == dist[a] + w exactly) inside the masked region. Stop vertices
    are not expanded, matching the path enumerator's first-hit semantics."""
    d = dims.shape[0]
    strides = _strides(dims)
    nv = 1
    for k in range(d):
        nv *= dims[k]
    seen = np.zeros(nv, np.bool_)
    queue = np.empty(nv, np.int64)
    if not region_mask[start] or stop_mask[start]:
        return False
    head = 0
    tail = 1
    queue[0] = start
    seen[start] = True
    while head < tail:
        v0 = queue[head]
        head += 1
        for code in range(2 * d):
            k = code >> 1
            ck = (v0 // strides[k]) % dims[k]
            if code & 1 == 0:
                if ck + 1 >= dims[k]:
                    continue
                u = v0 + strides[k]
                w = weights[k, v0]
            else:
                if ck - 1 < 0:
                    continue
                u = v0 - strides[k]
                w = weights[k, u]
            if w == INF or seen[u] or not region_mask[u]:
                continue
            if dist[u] != dist[v0] + w:
                continue
            if stop_mask[u]:
                return True
            seen[u] = True
            queue[tail] = u
            tail += 1
    return False


@njit(cache=True)
def pairwise_ball_check_fast(balls, vsets):
    """Same answer as pairwise_ball_check with a cover prefilter.

    The pair relation is symmetric (ball_i meets vset_j iff ball_j meets
    vset_i, both stating a vertex of one path within the ball radius of the
    other), so a path whose ball covers the union of all vertex sets is
    linked to everything and only the remaining paths need the quadratic
    scan.
    """
    n = balls.shape[0]
    w = balls.shape[1]
    union = np.zeros(w, np.uint64)
    for i in range(n):
        for t in range(w):
            union[t] |= vsets[i, t]
    rest = np.empty(n, np.int64)
    nr = 0
    for i in range(n):
        covered = True
        for t in range(w):
            if union[t] & ~balls[i, t]:
                covered = False
                break
        if not covered:
            rest[nr] = i
            nr += 1
    for a in range(nr):
        i = rest[a]
        for b in range(nr):
            if a == b:
                continue
            j = rest[b]
            hit = False
            for t in range(w):
                if balls[i, t] & vsets[j, t]:
                    hit = True
                    break
            if not hit:
                return i, j
    return -1, -1


@njit(cache=True)
def animal_best_sum(dims, indicator, start, length_cap):
    """Exact max of sum of edge indicators over self-avoiding paths from start.

    Branch and bound: a branch dies when current + remaining budget cannot
    beat the incumbent. Returns (best, best_path, best_len).
    """
    d = dims.shape[0]
    strides = _strides(dims)
    nv = 1
    for k in range(d):
        nv *= dims[k]
    visited = np.zeros(nv, np.bool_)
    path = np.empty(length_cap + 1, np.int64)
    next_dir = np.empty(length_cap + 1, np.int64)
    gained = np.empty(length_cap + 1, np.int64)
    best_path = np.empty(length_cap + 1, np.int64)

    depth = 0
    path[0] = start
    next_dir[0] = 0
    gained[0] = 0
    visited[start] = True
    best = np.int64(0)
    best_len = 1
    best_path[0] = start

    while depth >= 0:
        v0 = path[depth]
        cur = gained[depth]
        progressed = False
        if depth < length_cap and cur + (length_cap - depth) > best:
            while next_dir[depth] < 2 * d:
                code = next_dir[depth]
                next_dir[depth] += 1
                k = code >> 1
                ck = (v0 // strides[k]) % dims[k]
                if code & 1 == 0:
                    if ck + 1 >= dims[k]:
                        continue
                    u = v0 + strides[k]
                    ind = indicator[k, v0]
                else:
                    if ck - 1 < 0:
                        continue
                    u = v0 - strides[k]
                    ind = indicator[k, u]
                if visited[u]:
                    continue
                depth += 1
                path[depth] = u
                next_dir[depth] = 0
                gained[depth] = cur + ind
                visited[u] = True
                if gained[depth] > best:
                    best = gained[depth]
                    best_len = depth + 1
                    for i in range(best_len):
                        best_path[i] = path[i]
                progressed = True
                break
        if not progressed:
            visited[v0] = False
            depth -= 1
    return best, best_path, best_len
