"""Geometric line-graph refinement: bridge small gaps, smooth zigzags along
chains, snap near-coincident nodes.  Endpoints and junctions of the input
graph never move."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import PixelPoint
from ..model import LineGraph

BRIDGE_ANGLE_DEG = 30.0
SNAP_RADIUS_PX = 2.0


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _adjacency(n: int, edges) -> list[list[int]]:
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return adj


def components(g: LineGraph) -> list[int]:
    """Component id per node (smallest node index in the component)."""
    uf = _UnionFind(len(g.nodes))
    for a, b in g.edges:
        uf.union(a, b)
    return [uf.find(i) for i in range(len(g.nodes))]


def _undirected_angle(u: np.ndarray, v: np.ndarray) -> float:
    """Angle in degrees between two lines, in [0, 90]."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 180.0
    c = abs(float(np.dot(u, v))) / (nu * nv)
    return math.degrees(math.acos(min(1.0, c)))


def bridge_gaps(g: LineGraph, gap_tolerance_px: float, angle_deg: float = BRIDGE_ANGLE_DEG) -> LineGraph:
    """Join endpoints of distinct components lying within the tolerance whose
    incident segments are within ``angle_deg`` of parallel; nearest pairs first."""
    xy = g.coords()
    adj = _adjacency(len(xy), g.edges)
    ends = [i for i, nb in enumerate(adj) if len(nb) == 1]
    if len(ends) < 2:
        return g
    tree = cKDTree(xy[ends])
    pairs = sorted(
        (float(np.hypot(*(xy[ends[i]] - xy[ends[j]]))), ends[i], ends[j])
        for i, j in tree.query_pairs(gap_tolerance_px)
    )
    uf = _UnionFind(len(xy))
    for a, b in g.edges:
        uf.union(a, b)
    used: set[int] = set()
    new_edges = list(g.edges)
    for d, a, b in pairs:
        if d > gap_tolerance_px or a in used or b in used or uf.find(a) == uf.find(b):
            continue
        da = xy[a] - xy[adj[a][0]]
        db = xy[b] - xy[adj[b][0]]
        if _undirected_angle(da, db) > angle_deg:
            continue
        uf.union(a, b)
        used.update((a, b))
        new_edges.append((a, b))
    return LineGraph(g.nodes, new_edges, g.label)


def _chains(n: int, edges, anchors: set[int]) -> list[tuple[list[int], bool]]:
    """Maximal paths whose interior nodes are non-anchors of degree 2.
    Returns (node list, is_cycle)."""
    adj = _adjacency(n, edges)
    seen_edges: set[tuple[int, int]] = set()
    out = []
    key = lambda a, b: (min(a, b), max(a, b))
    stops = {i for i in range(n) if i in anchors or len(adj[i]) != 2}
    for s in sorted(stops):
        for nb in adj[s]:
            if key(s, nb) in seen_edges:
                continue
            path = [s, nb]
            seen_edges.add(key(s, nb))
            while path[-1] not in stops:
                cur, prev = path[-1], path[-2]
                nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
                seen_edges.add(key(cur, nxt))
                path.append(nxt)
            out.append((path, False))
    # leftover pure cycles of degree-2 nodes
    for a, b in edges:
        if key(a, b) in seen_edges:
            continue
        path = [a, b]
        seen_edges.add(key(a, b))
        while path[-1] != a:
            cur, prev = path[-1], path[-2]
            nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
            seen_edges.add(key(cur, nxt))
            path.append(nxt)
        out.append((path[:-1], True))
    return out


def smooth_chains(g: LineGraph, window: int, protected: Optional[set[int]] = None) -> LineGraph:
    """Moving average over ``window`` nodes along every chain, shrinking the
    window symmetrically near chain ends.  Anchor nodes stay put."""
    if window < 1 or window % 2 == 0:
        raise ValueError("smoothing window must be a positive odd integer")
    half = window // 2
    xy = g.coords()
    new = xy.copy()
    anchors = set(protected or ())
    for path, cycle in _chains(len(xy), g.edges, anchors):
        pts = xy[path]
        m = len(path)
        for i in range(m):
            node = path[i]
            if node in anchors:
                continue
            if cycle:
                k = min(half, (m - 1) // 2)
                idx = [(i + o) % m for o in range(-k, k + 1)]
            else:
                if i == 0 or i == m - 1:
                    continue
                k = min(half, i, m - 1 - i)
                idx = list(range(i - k, i + k + 1))
            new[node] = pts[idx].mean(axis=0)
    return LineGraph([PixelPoint(float(x), float(y)) for x, y in new], g.edges, g.label)


def snap_nodes(g: LineGraph, radius: float = SNAP_RADIUS_PX, protected: Optional[set[int]] = None) -> LineGraph:
    """Merge clusters of nodes within ``radius``.  A cluster takes the
    coordinate of its protected node; clusters with several distinct
    protected coordinates attach free nodes to the nearest of them."""
    xy = g.coords()
    n = len(xy)
    if n == 0:
        return g
    protected = set(protected or ())
    uf = _UnionFind(n)
    for a, b in cKDTree(xy).query_pairs(radius):
        uf.union(a, b)
    clusters: dict[int, list[int]] = {}
    for i in range(n):
        clusters.setdefault(uf.find(i), []).append(i)
    target = list(range(n))
    coord = {i: (float(xy[i, 0]), float(xy[i, 1])) for i in range(n)}
    for members in clusters.values():
        if len(members) == 1:
            continue
        prot = [i for i in members if i in protected]
        reps: dict[tuple[float, float], int] = {}
        for i in prot:
            reps.setdefault(coord[i], i)
        if not reps:
            rep = members[0]
            coord[rep] = tuple(float(c) for c in xy[members].mean(axis=0))
            for i in members:
                target[i] = rep
            continue
        rep_items = list(reps.items())
        for i in members:
            if i in protected:
                target[i] = reps[coord[i]]
            else:
                target[i] = min(rep_items, key=lambda kv: (math.dist(kv[0], coord[i]), kv[1]))[1]
    keep = sorted(set(target))
    new_index = {old: k for k, old in enumerate(keep)}
    nodes = [PixelPoint(*coord[i]) for i in keep]
    seen, edges = set(), []
    for a, b in g.edges:
        a2, b2 = new_index[target[a]], new_index[target[b]]
        if a2 == b2:
            continue
        k = (min(a2, b2), max(a2, b2))
        if k not in seen:
            seen.add(k)
            edges.append((a2, b2))
    return LineGraph(nodes, edges, g.label)


def refine_line_graph(g: LineGraph, gap_tolerance_px: float = 5.0, smoothing_window: int = 3,
                      angle_deg: float = BRIDGE_ANGLE_DEG, snap_radius: float = SNAP_RADIUS_PX) -> LineGraph:
    """Bridge, then smooth, then snap.  Nodes that are endpoints (degree 1)
    or junctions (degree >= 3) in ``g`` keep their exact coordinates."""
    deg = g.degrees()
    protected = {i for i, d in enumerate(deg) if d != 2}
    bridged = bridge_gaps(g, gap_tolerance_px, angle_deg)
    smoothed = smooth_chains(bridged, smoothing_window, protected)
    return snap_nodes(smoothed, snap_radius, protected)


def total_length(g: LineGraph) -> float:
    xy = g.coords()
    return float(sum(math.dist(xy[a], xy[b]) for a, b in g.edges))
