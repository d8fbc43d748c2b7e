"""Brute-force geometric and graph oracles the test suite checks the library against.

Everything here is deliberately naive — O(n^2) scans, gift wrapping, union-find —
so the implementations under test are confirmed by independent arithmetic, not
by themselves.
"""

import json
import math


# -- segment / polygon distance -----------------------------------------------

def point_seg_dist(p, a, b):
    """Distance from point p to segment ab."""
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(px - cx, py - cy)


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segs_intersect(p1, p2, q1, q2):
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    def on(a, b, c):
        return _orient(a, b, c) == 0 and min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) \
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
    return on(q1, q2, p1) or on(q1, q2, p2) or on(p1, p2, q1) or on(p1, p2, q2)


def seg_seg_dist(p1, p2, q1, q2):
    if segs_intersect(p1, p2, q1, q2):
        return 0.0
    return min(
        point_seg_dist(p1, q1, q2),
        point_seg_dist(p2, q1, q2),
        point_seg_dist(q1, p1, p2),
        point_seg_dist(q2, p1, p2),
    )


def ring_segments(ring):
    """Consecutive vertex pairs of a closed ring."""
    return [(ring[i], ring[i + 1]) for i in range(len(ring) - 1)]


def point_in_ring(pt, ring):
    """Ray-cast point-in-polygon for a closed ring (boundary not guaranteed)."""
    x, y = pt
    inside = False
    for (x1, y1), (x2, y2) in ring_segments(ring):
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
    return inside


def point_in_or_on_ring(pt, ring, tol=1e-9):
    if point_in_ring(pt, ring):
        return True
    return min(point_seg_dist(pt, a, b) for a, b in ring_segments(ring)) <= tol


def poly_min_dist(rings_a, rings_b):
    """Min distance between two polygons given as lists of closed outer rings.

    Assumes no containment (true for the disjoint test shapes): the minimum is
    attained on the boundaries, so an all-pairs segment scan suffices.
    """
    best = math.inf
    for ra in rings_a:
        for rb in rings_b:
            for sa in ring_segments(ra):
                for sb in ring_segments(rb):
                    best = min(best, seg_seg_dist(*sa, *sb))
    return best


# -- centroid / hull ------------------------------------------------------------

def shoelace(ring):
    """(signed area, centroid) of one closed ring."""
    a = 0.0
    cx = cy = 0.0
    for (x1, y1), (x2, y2) in ring_segments(ring):
        w = x1 * y2 - x2 * y1
        a += w
        cx += (x1 + x2) * w
        cy += (y1 + y2) * w
    a *= 0.5
    return a, (cx / (6 * a), cy / (6 * a))


def multipart_centroid(rings):
    """Area-weighted centroid over several outer rings."""
    total = 0.0
    mx = my = 0.0
    for ring in rings:
        a, (cx, cy) = shoelace(ring)
        a = abs(a)
        total += a
        mx += a * cx
        my += a * cy
    return mx / total, my / total


def gift_wrap_hull(points):
    """Convex hull vertices, counter-clockwise, by gift wrapping."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    hull = []
    start = min(pts)
    p = start
    while True:
        hull.append(p)
        q = pts[0] if pts[0] != p else pts[1]
        for r in pts:
            if r == p:
                continue
            o = _orient(p, q, r)
            if o < 0 or (o == 0 and math.dist(p, r) > math.dist(p, q)):
                q = r
        p = q
        if p == start:
            break
    return hull


# -- graphs ---------------------------------------------------------------------

def uf_components(n, edges):
    """Union-find partition of 1..n under undirected 1-based edges."""
    parent = list(range(n + 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    groups = {}
    for i in range(1, n + 1):
        groups.setdefault(find(i), []).append(i)
    return {frozenset(g) for g in groups.values()}


# -- fixture building -------------------------------------------------------------

def unit_of(name, *outer_rings, attrs=None):
    """AreaUnit from one or more hole-free closed rings, each its own part."""
    from arelink import AreaUnit

    parts = tuple((tuple(tuple(p) for p in ring),) for ring in outer_rings)
    return AreaUnit(name, parts, attrs or {})

def square_feature(name, x0, y0, size=1.0, props=None):
    ring = [
        [x0, y0],
        [x0 + size, y0],
        [x0 + size, y0 + size],
        [x0, y0 + size],
        [x0, y0],
    ]
    p = {"name": name}
    if props:
        p.update(props)
    return {
        "type": "Feature",
        "properties": p,
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


def feature_collection(features):
    return json.dumps({"type": "FeatureCollection", "features": features})


def grid_features(nx, ny, props_fn=None):
    """Row-major nx*ny unit squares named g01, g02, ...; squares touch rook-and-corner."""
    feats = []
    k = 0
    for iy in range(ny):
        for ix in range(nx):
            k += 1
            name = f"g{k:02d}"
            props = props_fn(name, ix, iy) if props_fn else None
            feats.append(square_feature(name, float(ix), float(iy), 1.0, props))
    return feats


def rook_edges(nx, ny):
    """1-based rook adjacency pairs for a row-major nx*ny grid."""
    edges = []
    for iy in range(ny):
        for ix in range(nx):
            i = iy * nx + ix + 1
            if ix + 1 < nx:
                edges.append((i, i + 1))
            if iy + 1 < ny:
                edges.append((i, i + nx))
    return edges


def queen_grid_adjacency(nx, ny):
    """Expected queen adjacency dict for a grid of touching unit squares."""
    adj = {}
    for iy in range(ny):
        for ix in range(nx):
            i = iy * nx + ix + 1
            nbrs = []
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dx == dy == 0:
                        continue
                    jx, jy = ix + dx, iy + dy
                    if 0 <= jx < nx and 0 <= jy < ny:
                        nbrs.append(jy * nx + jx + 1)
            adj[i] = sorted(nbrs)
    return adj
