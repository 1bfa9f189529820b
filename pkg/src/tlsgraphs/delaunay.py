"""2-D Delaunay triangulation by incremental insertion with Lawson flips.

Predicates are evaluated in floating point with a forward error bound and fall
back to exact rational arithmetic only when the float sign is uncertain, so
the empty-circumcircle property holds exactly.  Degenerate inputs are defined
behavior: duplicate points are merged, fully collinear inputs produce the
nearest-neighbor chain, and exactly cocircular quads are resolved to the
lexicographically smallest diagonal (by merged point index).
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

_EPS = np.finfo(np.float64).eps / 2  # 2^-53
_ORIENT_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_INCIRCLE_BOUND = (10.0 + 96.0 * _EPS) * _EPS


def orient_sign(pa, pb, pc) -> int:
    """Sign of the cross product (pb-pa) x (pc-pa): +1 ccw, -1 cw, 0 collinear."""
    detleft = (pb[0] - pa[0]) * (pc[1] - pa[1])
    detright = (pb[1] - pa[1]) * (pc[0] - pa[0])
    det = detleft - detright
    detsum = abs(detleft) + abs(detright)
    if abs(det) > _ORIENT_BOUND * detsum:
        return 1 if det > 0 else -1
    ax, ay = Fraction(pa[0]), Fraction(pa[1])
    bx, by = Fraction(pb[0]), Fraction(pb[1])
    cx, cy = Fraction(pc[0]), Fraction(pc[1])
    exact = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (exact > 0) - (exact < 0)


def incircle_sign(pa, pb, pc, pd) -> int:
    """+1 iff pd lies strictly inside the circumcircle of ccw triangle (pa,pb,pc),
    -1 strictly outside, 0 exactly on it."""
    adx = pa[0] - pd[0]
    ady = pa[1] - pd[1]
    bdx = pb[0] - pd[0]
    bdy = pb[1] - pd[1]
    cdx = pc[0] - pd[0]
    cdy = pc[1] - pd[1]
    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    alift = adx * adx + ady * ady
    cdxady = cdx * ady
    adxcdy = adx * cdy
    blift = bdx * bdx + bdy * bdy
    adxbdy = adx * bdy
    bdxady = bdx * ady
    clift = cdx * cdx + cdy * cdy
    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * alift
        + (abs(cdxady) + abs(adxcdy)) * blift
        + (abs(adxbdy) + abs(bdxady)) * clift
    )
    if abs(det) > _INCIRCLE_BOUND * permanent:
        return 1 if det > 0 else -1
    fd = (Fraction(pd[0]), Fraction(pd[1]))
    rows = []
    for (px, py) in (pa, pb, pc):
        dx, dy = Fraction(px) - fd[0], Fraction(py) - fd[1]
        rows.append((dx, dy, dx * dx + dy * dy))
    exact = (
        rows[0][2] * (rows[1][0] * rows[2][1] - rows[2][0] * rows[1][1])
        + rows[1][2] * (rows[2][0] * rows[0][1] - rows[0][0] * rows[2][1])
        + rows[2][2] * (rows[0][0] * rows[1][1] - rows[1][0] * rows[0][1])
    )
    return (exact > 0) - (exact < 0)


class _Triangulation:
    """Growing triangle soup with directed-edge adjacency; vertices are ccw."""

    def __init__(self, points: np.ndarray):
        self.pts = points
        self._verts = np.zeros((64, 3), dtype=np.int64)
        self._alive = np.zeros(64, dtype=bool)
        self._ntri = 0
        self.edge_tri: dict[tuple[int, int], int] = {}

    def tri(self, idx: int) -> tuple[int, int, int]:
        a, b, c = self._verts[idx]
        return int(a), int(b), int(c)

    def add_tri(self, a: int, b: int, c: int) -> int:
        idx = self._ntri
        if idx == self._verts.shape[0]:
            self._verts = np.concatenate([self._verts, np.zeros_like(self._verts)])
            self._alive = np.concatenate([self._alive, np.zeros_like(self._alive)])
        self._verts[idx] = (a, b, c)
        self._alive[idx] = True
        self._ntri += 1
        for u, v in ((a, b), (b, c), (c, a)):
            self.edge_tri[(u, v)] = idx
        return idx

    def kill_tri(self, idx: int) -> None:
        a, b, c = self.tri(idx)
        self._alive[idx] = False
        for u, v in ((a, b), (b, c), (c, a)):
            if self.edge_tri.get((u, v)) == idx:
                del self.edge_tri[(u, v)]

    def apex(self, u: int, v: int) -> int | None:
        """Third vertex of the triangle left of directed edge (u, v), if any."""
        idx = self.edge_tri.get((u, v))
        if idx is None:
            return None
        a, b, c = self.tri(idx)
        if (a, b) == (u, v):
            return c
        if (b, c) == (u, v):
            return a
        return b

    # -- insertion -------------------------------------------------------

    def locate(self, p: int) -> tuple[int, tuple[int, int] | None] | None:
        """Triangle containing point p: (triangle index, on-edge) or None if outside.

        Float orientations with a rigorous error bound prune the candidates;
        only near-boundary cases are re-examined exactly.
        """
        mask = self._alive[: self._ntri]
        live = np.nonzero(mask)[0]
        if live.size == 0:
            return None
        verts = self._verts[: self._ntri][mask]
        pt = self.pts[p]
        mins = np.full(live.shape, np.inf)
        for k in range(3):
            a = self.pts[verts[:, k]]
            b = self.pts[verts[:, (k + 1) % 3]]
            detleft = (b[:, 0] - a[:, 0]) * (pt[1] - a[:, 1])
            detright = (b[:, 1] - a[:, 1]) * (pt[0] - a[:, 0])
            det = detleft - detright
            err = _ORIENT_BOUND * (np.abs(detleft) + np.abs(detright))
            # det + err < 0 certifies p strictly outside this edge
            mins = np.minimum(mins, det + err)
        for cand in live[mins >= 0]:
            a, b, c = self.tri(int(cand))
            signs = [
                orient_sign(self.pts[a], self.pts[b], pt),
                orient_sign(self.pts[b], self.pts[c], pt),
                orient_sign(self.pts[c], self.pts[a], pt),
            ]
            if min(signs) < 0:
                continue
            zeros = signs.count(0)
            if zeros == 0:
                return int(cand), None
            if zeros == 1:
                edges = ((a, b), (b, c), (c, a))
                return int(cand), edges[signs.index(0)]
            # two zeros means p coincides with a vertex; duplicates were
            # merged beforehand, so this triangle cannot contain p strictly
        return None

    def hull_edges(self) -> list[tuple[int, int]]:
        return [e for e in self.edge_tri if (e[1], e[0]) not in self.edge_tri]

    def legalize(self, p: int, u: int, v: int) -> None:
        """Restore the Delaunay property across edges opposite a new vertex p."""
        stack = [(u, v)]
        while stack:
            u, v = stack.pop()
            idx = self.edge_tri.get((u, v))
            if idx is None:
                continue
            a, b, c = self.tri(idx)
            if (a, b) == (u, v):
                w = c
            elif (b, c) == (u, v):
                w = a
            else:
                w = b
            if w != p:
                continue  # edge was flipped away since being queued
            if (v, u) not in self.edge_tri:
                continue  # hull edge
            z = self.apex(v, u)
            assert z is not None
            if incircle_sign(self.pts[u], self.pts[v], self.pts[p], self.pts[z]) <= 0:
                continue
            self.kill_tri(idx)
            self.kill_tri(self.edge_tri[(v, u)])
            self.add_tri(u, z, p)
            self.add_tri(z, v, p)
            stack.append((u, z))
            stack.append((z, v))

    def insert(self, p: int) -> None:
        located = self.locate(p)
        if located is not None:
            idx, on_edge = located
            if on_edge is None:
                a, b, c = self.tri(idx)
                self.kill_tri(idx)
                self.add_tri(a, b, p)
                self.add_tri(b, c, p)
                self.add_tri(c, a, p)
                for u, v in ((a, b), (b, c), (c, a)):
                    self.legalize(p, u, v)
            else:
                self._split_edge(p, *on_edge)
            return
        # outside the hull: fan to every strictly visible hull edge
        new_edges: list[tuple[int, int]] = []
        for u, v in self.hull_edges():
            if orient_sign(self.pts[u], self.pts[v], self.pts[p]) < 0:
                self.add_tri(v, u, p)
                new_edges.append((v, u))
        for u, v in new_edges:
            self.legalize(p, u, v)

    def _split_edge(self, p: int, u: int, v: int) -> None:
        outer: list[tuple[int, int]] = []
        for (s, t) in ((u, v), (v, u)):
            idx = self.edge_tri.get((s, t))
            if idx is None:
                continue
            w = self.apex(s, t)
            assert w is not None
            self.kill_tri(idx)
            self.add_tri(s, p, w)
            self.add_tri(p, t, w)
            outer.extend([(w, s), (t, w)])
        for s, t in outer:
            self.legalize(p, s, t)

    # -- cocircular tie-break ----------------------------------------------

    def resolve_cocircular(self) -> None:
        """Flip exactly cocircular quads to the lexicographically smallest diagonal."""
        queue = [e for e in self.edge_tri if e[0] < e[1] and (e[1], e[0]) in self.edge_tri]
        while queue:
            u, v = queue.pop()
            if (u, v) not in self.edge_tri or (v, u) not in self.edge_tri:
                continue
            w = self.apex(u, v)
            z = self.apex(v, u)
            if w is None or z is None:
                continue
            if incircle_sign(self.pts[u], self.pts[v], self.pts[w], self.pts[z]) != 0:
                continue
            if tuple(sorted((w, z))) >= tuple(sorted((u, v))):
                continue
            self.kill_tri(self.edge_tri[(u, v)])
            self.kill_tri(self.edge_tri[(v, u)])
            self.add_tri(u, z, w)
            self.add_tri(z, v, w)
            for s, t in ((u, z), (z, v), (v, w), (w, u)):
                a, b = min(s, t), max(s, t)
                if (a, b) in self.edge_tri and (b, a) in self.edge_tri:
                    queue.append((a, b))

    def undirected_edges(self) -> np.ndarray:
        pairs = {(min(u, v), max(u, v)) for (u, v) in self.edge_tri}
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(pairs), dtype=np.int64)

    def triangles(self) -> list[tuple[int, int, int]]:
        return [self.tri(i) for i in np.nonzero(self._alive[: self._ntri])[0]]


def _merge_duplicates(points: np.ndarray) -> np.ndarray:
    """Indices of first occurrences, preserving input order."""
    seen: set[tuple[float, float]] = set()
    keep = []
    for i, (x, y) in enumerate(points):
        key = (float(x), float(y))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return np.array(keep, dtype=np.int64)


def _collinear_chain(points: np.ndarray, indices: np.ndarray) -> np.ndarray:
    order = indices[np.lexsort((points[indices, 1], points[indices, 0]))]
    if order.size < 2:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.stack([order[:-1], order[1:]], axis=1)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    return np.unique(np.stack([lo, hi], axis=1), axis=0)


def _build(points: np.ndarray, shuffle_seed: int) -> _Triangulation | None:
    """Triangulate distinct points; None when all points are collinear."""
    keep = _merge_duplicates(points)
    if keep.size < 3:
        return None
    order = keep[np.random.default_rng(shuffle_seed).permutation(keep.size)]
    i0, i1 = int(order[0]), int(order[1])
    tri_start = None
    for k in range(2, order.size):
        if orient_sign(points[i0], points[i1], points[order[k]]) != 0:
            tri_start = k
            break
    if tri_start is None:
        return None
    tri = _Triangulation(points)
    i2 = int(order[tri_start])
    if orient_sign(points[i0], points[i1], points[i2]) > 0:
        tri.add_tri(i0, i1, i2)
    else:
        tri.add_tri(i0, i2, i1)
    for k in range(2, order.size):
        if k != tri_start:
            tri.insert(int(order[k]))
    tri.resolve_cocircular()
    return tri


def delaunay_edges(points: np.ndarray, shuffle_seed: int = 0x5EED) -> np.ndarray:
    """Delaunay edge set of 2-D points as a sorted (m, 2) array of index pairs.

    Duplicate points are merged onto their first occurrence.  Fewer than two
    distinct points give no edges; fully collinear inputs give the chain of
    consecutive points along the line.  Insertion order is a seeded shuffle
    (the result is order-independent except for exactly cocircular ties, which
    the final tie-break pass resolves deterministically).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if points.size and not np.all(np.isfinite(points)):
        raise ValueError("non-finite point coordinates")
    tri = _build(points, shuffle_seed)
    if tri is None:
        return _collinear_chain(points, _merge_duplicates(points))
    return tri.undirected_edges()


def delaunay_triangles(points: np.ndarray, shuffle_seed: int = 0x5EED) -> list[tuple[int, int, int]]:
    """Triangles of the triangulation (empty for collinear inputs); exposed for
    the empty-circumcircle verification tooling."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    tri = _build(points, shuffle_seed)
    return [] if tri is None else tri.triangles()
