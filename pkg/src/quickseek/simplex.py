"""Regular grids on the probability simplex with piecewise-linear interpolation.

A node of a ``dim``-dimensional grid with ``n = resolution - 1`` intervals is an
integer vector ``a >= 0`` with ``sum(a) <= n``; its coordinates are ``a / n``.
Interpolation works in cumulative coordinates ``u_k = sum_{m >= k} a_m``, where
the grid is the set of monotone lattice points and the Kuhn triangulation of
each unit cube keeps every vertex inside the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class SimplexGrid:
    dim: int
    resolution: int
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if int(self.resolution) != self.resolution or self.resolution < 11:
            raise ValueError("resolution must be an integer >= 11")
        n = self.n
        rng = range(n + 1)
        if self.dim == 2:
            pts = [(a, b) for a in rng for b in range(n - a + 1)]
        else:
            pts = [(a, b, c) for a in rng for b in range(n - a + 1) for c in range(n - a - b + 1)]
        lattice = np.array(pts, dtype=np.int64)
        nodes = lattice / n
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_lattice", lattice)

    @property
    def n(self) -> int:
        return self.resolution - 1

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def lattice(self) -> np.ndarray:
        return self._lattice

    def index(self, lattice) -> np.ndarray:
        """Node index of integer coordinates (vectorised, last axis = dim)."""
        a = np.asarray(lattice, dtype=np.int64)
        n = self.n
        if self.dim == 2:
            return _index2(a[..., 0], a[..., 1], n)
        return _index3(a[..., 0], a[..., 1], a[..., 2], n)

    def node_index(self, point) -> int:
        """Index of the node at ``point``; raises if it is not a node."""
        a = np.rint(np.asarray(point, dtype=float) * self.n).astype(np.int64)
        if np.max(np.abs(a / self.n - np.asarray(point))) > SNAP or a.sum() > self.n or a.min() < 0:
            raise ValueError(f"{point} is not a grid node")
        return int(self.index(a))

    def locate(self, points):
        """Vertex indices and barycentric weights of the containing cells.

        ``points`` has shape (m, dim).  Returns arrays of shape (m, dim + 1).
        """
        pts = np.array(points, dtype=float, ndmin=2)
        pts = np.clip(pts, 0.0, 1.0)
        total = pts.sum(axis=1, keepdims=True)
        pts = np.where(total > 1.0, pts / np.maximum(total, 1e-300), pts)
        u = np.cumsum(pts[:, ::-1], axis=1)[:, ::-1] * self.n
        r = np.rint(u)
        u = np.where(np.abs(u - r) < SNAP, r, u)
        base = np.minimum(np.floor(u), self.n - 1).astype(np.int64)
        frac = u - base
        order = np.argsort(-frac, axis=1, kind="stable")
        fs = np.take_along_axis(frac, order, axis=1)
        m, d = pts.shape
        weights = np.empty((m, d + 1))
        weights[:, 0] = 1.0 - fs[:, 0]
        weights[:, 1:d] = fs[:, :d - 1] - fs[:, 1:]
        weights[:, d] = fs[:, d - 1]
        verts = np.empty((m, d + 1, d), dtype=np.int64)
        verts[:, 0] = base
        cur = base.copy()
        rows = np.arange(m)
        for k in range(d):
            cur[rows, order[:, k]] += 1
            verts[:, k + 1] = cur
        # cumulative -> plain lattice coordinates
        plain = verts.copy()
        plain[..., :-1] -= verts[..., 1:]
        return self.index(plain), weights

    def interpolate(self, values: np.ndarray, points) -> np.ndarray:
        idx, w = self.locate(points)
        return np.einsum("ij,ij->i", np.asarray(values)[idx], w)

    def locate_one(self, point):
        """Scalar fast path of ``locate`` for a single point."""
        n = self.n
        if self.dim == 2:
            x, y = point
            x = min(max(x, 0.0), 1.0)
            y = min(max(y, 0.0), 1.0)
            s = x + y
            if s > 1.0:
                x, y = x / s, y / s
            u = [(x + y) * n, y * n]
        else:
            x, y, z = point
            x = min(max(x, 0.0), 1.0)
            y = min(max(y, 0.0), 1.0)
            z = min(max(z, 0.0), 1.0)
            s = x + y + z
            if s > 1.0:
                x, y, z = x / s, y / s, z / s
            u = [(x + y + z) * n, (y + z) * n, z * n]
        base = []
        frac = []
        for uk in u:
            r = round(uk)
            if abs(uk - r) < SNAP:
                uk = float(r)
            b = min(int(math.floor(uk)), n - 1)
            base.append(b)
            frac.append(uk - b)
        order = sorted(range(len(u)), key=lambda k: -frac[k])
        cur = list(base)
        verts = [tuple(cur)]
        weights = [1.0 - frac[order[0]]]
        for k, o in enumerate(order):
            cur[o] += 1
            verts.append(tuple(cur))
            nxt = frac[order[k + 1]] if k + 1 < len(order) else 0.0
            weights.append(frac[o] - nxt)
        if self.dim == 2:
            idx = [_index2(v[0] - v[1], v[1], n) for v in verts]
        else:
            idx = [_index3(v[0] - v[1], v[1] - v[2], v[2], n) for v in verts]
        return idx, weights

    def interpolate_one(self, values, point) -> float:
        """Interpolate one point; ``values`` may be a list for speed."""
        idx, w = self.locate_one(point)
        return sum(values[i] * wi for i, wi in zip(idx, w))


def _index2(a, b, n):
    return a * (n + 1) - a * (a - 1) // 2 + b


def _tet(m):
    return (m + 1) * (m + 2) * (m + 3) // 6


def _index3(a, b, c, n):
    return _tet(n) - _tet(n - a) + _index2(b, c, n - a)
