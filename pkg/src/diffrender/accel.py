"""Bounding-volume hierarchy over all scene triangles and batched ray queries.

Traversal is "packet" style: a node is visited once for the subset of rays whose
current closest hit could still lie inside it, so the Python overhead scales with
the number of nodes rather than the number of rays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scene import (
    DEGENERATE_AREA,
    RAY_EPSILON,
    DegenerateGeometryError,
    HitRecord,
    PointLight,
    Ray,
    Scene,
    triangle_areas,
)

LEAF_SIZE = 4
_DET_EPS = 1e-14


@dataclass
class Hits:
    """Result of a batched closest-hit query. ``tri`` is -1 for misses."""

    t: np.ndarray
    tri: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.tri >= 0


def dot(a, b):
    """Row-wise dot product with a fixed summation order."""
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def intersect_triangle(o, d, v0, v1, v2):
    """Moller-Trumbore test for matching rows of rays and triangles.

    Returns ``(t, u, v)``; ``t`` is ``inf`` where there is no intersection.
    """
    e1 = v1 - v0
    e2 = v2 - v0
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    e1x, e1y, e1z = e1[..., 0], e1[..., 1], e1[..., 2]
    e2x, e2y, e2z = e2[..., 0], e2[..., 1], e2[..., 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    ok = np.abs(det) > _DET_EPS
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - v0
    sx, sy, sz = s[..., 0], s[..., 1], s[..., 2]
    u = (sx * px + sy * py + sz * pz) * inv
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    ok &= (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
    return np.where(ok, t, np.inf), u, v


def _better(t, tri, best_t, best_tri):
    return (t < best_t) | ((t == best_t) & (tri < best_tri))


def _update(hits, rays, t, tri, u, v, t_min):
    ok = (t >= t_min) & _better(t, tri, hits.t[rays], hits.tri[rays])
    sel = rays[ok]
    hits.t[sel] = t[ok]
    hits.tri[sel] = tri[ok] if np.ndim(tri) else tri
    hits.b1[sel] = u[ok]
    hits.b2[sel] = v[ok]


class AccelStructure:
    """Flattened triangle soup of a scene plus a median-split BVH.

    Immutable after construction; queries only read its arrays.
    """

    def __init__(self, scene: Scene):
        self.scene = scene
        verts, idx, mesh_of, local_of, vert_offset = [], [], [], [], []
        offset = 0
        for m, mesh in enumerate(scene.meshes):
            areas = triangle_areas(mesh.vertices, mesh.indices)
            bad = np.nonzero(areas <= DEGENERATE_AREA)[0]
            if bad.size:
                raise DegenerateGeometryError(
                    f"meshes[{m}] triangle {int(bad[0])} is degenerate (area {areas[bad[0]]:.3g})"
                )
            verts.append(mesh.vertices)
            idx.append(mesh.indices + offset)
            mesh_of.append(np.full(len(mesh), m, dtype=np.int64))
            local_of.append(np.arange(len(mesh), dtype=np.int64))
            vert_offset.append(offset)
            offset += len(mesh.vertices)
        self.vertex_offset = np.array(vert_offset, dtype=np.int64)
        self.vertices = np.concatenate(verts) if verts else np.zeros((0, 3))
        self.indices = np.concatenate(idx) if idx else np.zeros((0, 3), dtype=np.int64)
        self.tri_mesh = np.concatenate(mesh_of) if mesh_of else np.zeros(0, dtype=np.int64)
        self.tri_local = np.concatenate(local_of) if local_of else np.zeros(0, dtype=np.int64)
        self.tri_material = np.array(
            [scene.meshes[m].material_id for m in self.tri_mesh], dtype=np.int64
        )
        self.tri_verts = self.vertices[self.indices] if len(self.indices) else np.zeros((0, 3, 3))

        normals = []
        self.has_vertex_normals = np.zeros(len(self.indices), dtype=bool)
        start = 0
        for mesh in scene.meshes:
            if mesh.normals is not None:
                self.has_vertex_normals[start : start + len(mesh)] = True
                normals.append(mesh.normals[mesh.indices])
            else:
                normals.append(np.zeros((len(mesh), 3, 3)))
            start += len(mesh)
        self.tri_normals = np.concatenate(normals) if normals else np.zeros((0, 3, 3))

        self.materials_rho_d = np.array([m.rho_d for m in scene.materials]).reshape(-1, 3)
        self.materials_rho_s = np.array([m.rho_s for m in scene.materials]).reshape(-1, 3)
        self.materials_shininess = np.array([m.shininess for m in scene.materials], dtype=np.float64)

        self._build()

    # -- construction ---------------------------------------------------

    def _build(self):
        n = len(self.indices)
        self.order = np.arange(n, dtype=np.int64)
        self.node_min: list = []
        self.node_max: list = []
        self.node_left: list = []
        self.node_right: list = []
        self.node_start: list = []
        self.node_count: list = []
        if n == 0:
            self._finalize()
            return
        tv = self.tri_verts
        tri_min = tv.min(axis=1)
        tri_max = tv.max(axis=1)
        centroids = tv.mean(axis=1)

        stack = [(0, n, self._new_node())]
        while stack:
            lo, hi, node = stack.pop()
            ids = self.order[lo:hi]
            bmin = tri_min[ids].min(axis=0)
            bmax = tri_max[ids].max(axis=0)
            pad = 1e-7 * (np.abs(bmin) + np.abs(bmax) + 1.0)
            self.node_min[node] = bmin - pad
            self.node_max[node] = bmax + pad
            if hi - lo <= LEAF_SIZE:
                self.node_start[node] = lo
                self.node_count[node] = hi - lo
                continue
            c = centroids[ids]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            # stable sort keeps the build deterministic when centroids tie
            self.order[lo:hi] = ids[np.argsort(c[:, axis], kind="stable")]
            mid = (lo + hi) // 2
            left, right = self._new_node(), self._new_node()
            self.node_left[node] = left
            self.node_right[node] = right
            stack.append((mid, hi, right))
            stack.append((lo, mid, left))
        self._finalize()

    def _new_node(self) -> int:
        self.node_min.append(None)
        self.node_max.append(None)
        self.node_left.append(-1)
        self.node_right.append(-1)
        self.node_start.append(0)
        self.node_count.append(0)
        return len(self.node_min) - 1

    def _finalize(self):
        self.node_min = np.array(self.node_min).reshape(-1, 3)
        self.node_max = np.array(self.node_max).reshape(-1, 3)
        self.node_left = np.array(self.node_left, dtype=np.int64)
        self.node_right = np.array(self.node_right, dtype=np.int64)
        self.node_start = np.array(self.node_start, dtype=np.int64)
        self.node_count = np.array(self.node_count, dtype=np.int64)
        # leaf triangle vertices grouped in BVH order
        self._leaf_verts = self.tri_verts[self.order] if len(self.order) else self.tri_verts

    @property
    def triangle_count(self) -> int:
        return len(self.indices)

    # -- queries --------------------------------------------------------

    def closest_hits(self, origins, directions, t_min=0.0, t_max=np.inf) -> Hits:
        """Closest intersection in ``[t_min, t_max]`` for every ray."""
        n = len(origins)
        t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,))
        hits = Hits(
            t=np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy(),
            tri=np.full(n, -1, dtype=np.int64),
            b1=np.zeros(n),
            b2=np.zeros(n),
        )
        if n == 0 or self.triangle_count == 0:
            return hits
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_d = 1.0 / directions
        # per-axis contiguous columns make the gathers below much cheaper
        oc = [np.ascontiguousarray(origins[:, a]) for a in range(3)]
        ic = [np.ascontiguousarray(inv_d[:, a]) for a in range(3)]
        stack = [(0, np.arange(n))]
        while stack:
            node, rays = stack.pop()
            lo, hi = self.node_min[node], self.node_max[node]
            near, far = None, None
            for a in range(3):
                o, i = oc[a][rays], ic[a][rays]
                s0 = (lo[a] - o) * i
                s1 = (hi[a] - o) * i
                # fmin/fmax ignore the NaN of 0*inf, which keeps the slab test conservative
                a_near, a_far = np.fmin(s0, s1), np.fmax(s0, s1)
                near = a_near if near is None else np.fmax(near, a_near)
                far = a_far if far is None else np.fmin(far, a_far)
            keep = (near <= far) & (far >= t_min[rays]) & (near <= hits.t[rays])
            rays = rays[keep]
            if rays.size == 0:
                continue
            count = self.node_count[node]
            if count:
                start = self.node_start[node]
                o = origins[rays]
                d = directions[rays]
                for k in range(start, start + count):
                    v = self._leaf_verts[k]
                    t, u, w = intersect_triangle(o, d, v[0], v[1], v[2])
                    _update(hits, rays, t, self.order[k], u, w, t_min[rays])
            else:
                stack.append((self.node_right[node], rays))
                stack.append((self.node_left[node], rays))
        miss = hits.tri < 0
        hits.t[miss] = np.inf
        return hits

    def brute_force_hits(self, origins, directions, t_min=0.0, t_max=np.inf) -> Hits:
        """Exhaustive reference query testing every ray against every triangle."""
        n = len(origins)
        t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,))
        hits = Hits(
            t=np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy(),
            tri=np.full(n, -1, dtype=np.int64),
            b1=np.zeros(n),
            b2=np.zeros(n),
        )
        rays = np.arange(n)
        for k in range(self.triangle_count):
            v = self.tri_verts[k]
            t, u, w = intersect_triangle(origins, directions, v[0], v[1], v[2])
            _update(hits, rays, t, k, u, w, t_min)
        hits.t[hits.tri < 0] = np.inf
        return hits

    def occluded(self, origins, directions, t_max) -> np.ndarray:
        """Shadow-ray test; True where geometry lies within ``(RAY_EPSILON, t_max)``."""
        return self.closest_hits(origins, directions, RAY_EPSILON, t_max).hit

    def geometric_normals(self, tri: np.ndarray) -> np.ndarray:
        """Unnormalised geometric normals ``(v1 - v0) x (v2 - v0)``."""
        v = self.tri_verts[tri]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    def shading_frame(self, tri, b1, b2, directions):
        """Hit normals facing the incoming rays.

        Returns ``(normal, N, flip)`` where ``N`` is the unnormalised geometric normal
        and ``flip`` the +/-1 orientation applied to it.
        """
        N = self.geometric_normals(tri)
        flip = np.where(dot(N, directions) > 0, -1.0, 1.0)
        n = flip[:, None] * N / np.linalg.norm(N, axis=1, keepdims=True)
        vn = self.has_vertex_normals[tri]
        if np.any(vn):
            tn = self.tri_normals[tri[vn]]
            b0 = 1.0 - b1[vn] - b2[vn]
            s = b0[:, None] * tn[:, 0] + b1[vn, None] * tn[:, 1] + b2[vn, None] * tn[:, 2]
            s /= np.linalg.norm(s, axis=1, keepdims=True)
            # keep the interpolated normal on the same side as the flipped geometric one
            s *= np.where(dot(s, n[vn]) < 0, -1.0, 1.0)[:, None]
            n[vn] = s
        return n, N, flip


def build_accel(scene: Scene) -> AccelStructure:
    return AccelStructure(scene)


def intersect(accel: AccelStructure, ray: Ray) -> Optional[HitRecord]:
    o = ray.origin[None, :]
    d = ray.direction[None, :]
    hits = accel.closest_hits(o, d, ray.t_min, ray.t_max)
    if not hits.hit[0]:
        return None
    tri = hits.tri[:1]
    normal, _, _ = accel.shading_frame(tri, hits.b1, hits.b2, d)
    t = float(hits.t[0])
    b1, b2 = float(hits.b1[0]), float(hits.b2[0])
    return HitRecord(
        point=ray.origin + t * ray.direction,
        normal=normal[0],
        t=t,
        mesh_id=int(accel.tri_mesh[tri[0]]),
        triangle_id=int(accel.tri_local[tri[0]]),
        barycentrics=(1.0 - b1 - b2, b1, b2),
    )


def light_arrays(scene: Scene):
    """Split lights into ``(index, is_point, position_or_direction, intensity)`` rows."""
    rows = []
    for i, light in enumerate(scene.lights):
        if isinstance(light, PointLight):
            rows.append((i, True, light.position, light.intensity))
        else:
            rows.append((i, False, light.direction, light.irradiance))
    return rows


__all__ = [
    "AccelStructure",
    "Hits",
    "build_accel",
    "intersect",
    "intersect_triangle",
    "light_arrays",
]
