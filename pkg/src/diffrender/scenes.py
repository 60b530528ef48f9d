"""Small procedural meshes and the reference scenes used by tests and demos."""

from __future__ import annotations

import numpy as np

from .scene import Camera, DirectionalLight, Material, PointLight, Scene, TriangleMesh


def quad(corner, edge_u, edge_v, material_id=0) -> TriangleMesh:
    """Parallelogram ``corner + s*edge_u + t*edge_v`` for ``s, t`` in [0, 1]."""
    c = np.asarray(corner, dtype=float)
    u = np.asarray(edge_u, dtype=float)
    v = np.asarray(edge_v, dtype=float)
    verts = [c, c + u, c + u + v, c + v]
    return TriangleMesh(verts, [[0, 1, 2], [0, 2, 3]], material_id)


def icosphere(center=(0.0, 0.0, 0.0), radius=1.0, subdivisions=2, material_id=0,
              smooth=False) -> TriangleMesh:
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    unit = np.array(verts)
    positions = np.asarray(center, dtype=float) + radius * unit
    return TriangleMesh(positions, faces, material_id, unit if smooth else None)


def analytic_plane_scene(width=64, height=64, rho_d=0.8, intensity=10.0, light_height=2.0,
                         camera_height=3.0, fov=60.0) -> Scene:
    """Large Lambertian plane at z=0 seen from above, point light on the z axis.

    Every visible point receives ``(rho_d/pi) * I * h / d^3`` with ``d`` its distance
    to the light; nothing else contributes.
    """
    plane = quad((-50.0, -50.0, 0.0), (100.0, 0.0, 0.0), (0.0, 100.0, 0.0))
    camera = Camera((0.0, 0.0, camera_height), (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), fov, width, height)
    return Scene(
        meshes=[plane],
        materials=[Material(np.full(3, rho_d))],
        lights=[PointLight((0.0, 0.0, light_height), np.full(3, intensity))],
        camera=camera,
    )


def two_plane_scene(width=8, height=8) -> Scene:
    """Floor at z=0 next to a vertical wall at x=1; light above both.

    The camera looks at the floor; one bounce off the wall adds indirect light.
    """
    floor = quad((-3.0, -3.0, 0.0), (4.0, 0.0, 0.0), (0.0, 6.0, 0.0), material_id=0)
    wall = quad((1.0, -3.0, 0.0), (0.0, 6.0, 0.0), (0.0, 0.0, 3.0), material_id=1)
    camera = Camera((0.0, 0.0, 2.5), (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 20.0, width, height)
    return Scene(
        meshes=[floor, wall],
        materials=[Material(np.full(3, 0.6)), Material(np.full(3, 0.9))],
        lights=[PointLight((0.0, 0.0, 1.5), np.full(3, 5.0))],
        camera=camera,
    )


def gradcheck_scene(width=16, height=16) -> Scene:
    """Three materials, one point light at the eye, every silhouette fixed.

    A back wall fills the whole view, so moving its vertices along z never changes
    which object a camera ray hits. With the light co-located with the camera no
    shadow boundary is visible either.
    """
    wall = quad((-4.0, -4.0, 0.0), (8.0, 0.0, 0.0), (0.0, 8.0, 0.0), material_id=0)
    tilted = TriangleMesh(
        [(-1.2, -0.9, 0.6), (0.1, -1.0, 0.9), (0.0, 0.2, 0.7), (-1.1, 0.1, 0.4)],
        [[0, 1, 2], [0, 2, 3]],
        material_id=1,
    )
    shard = TriangleMesh([(0.3, 0.1, 1.0), (1.3, 0.3, 0.8), (0.6, 1.2, 1.1)], [[0, 1, 2]], material_id=2)
    eye = (0.2, 0.1, 4.0)
    camera = Camera(eye, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 50.0, width, height)
    materials = [
        Material((0.6, 0.5, 0.4), (0.2, 0.2, 0.2), 8.0),
        Material((0.3, 0.6, 0.3), (0.3, 0.25, 0.3), 20.0),
        Material((0.5, 0.3, 0.6), (0.1, 0.2, 0.15), 4.0),
    ]
    return Scene(
        meshes=[wall, tilted, shard],
        materials=materials,
        lights=[PointLight(eye, (12.0, 11.0, 10.0))],
        camera=camera,
    )


def sphere_scene(width=64, height=64, rho_d=0.7, intensity=10.0, subdivisions=2,
                 rho_s=0.0, shininess=0.0) -> Scene:
    """Single sphere lit by one point light, for recovery experiments."""
    sphere = icosphere((0.0, 0.0, 0.0), 1.0, subdivisions, material_id=0, smooth=True)
    camera = Camera((0.0, 0.0, 4.0), (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 35.0, width, height)
    return Scene(
        meshes=[sphere],
        materials=[Material(np.full(3, rho_d), np.full(3, rho_s), shininess)],
        lights=[PointLight((2.0, 2.0, 3.0), np.full(3, intensity))],
        camera=camera,
    )


def ablation_scene(width=32, height=32, rho_d=(0.6, 0.4, 0.3), rho_s=(0.2, 0.2, 0.2),
                   shininess=20.0) -> Scene:
    """Glossy sphere resting on a diffuse floor; indirect light reaches both."""
    sphere = icosphere((0.0, 0.0, 1.0), 1.0, 2, material_id=0, smooth=True)
    floor = quad((-4.0, -4.0, 0.0), (8.0, 0.0, 0.0), (0.0, 8.0, 0.0), material_id=1)
    camera = Camera((0.0, -4.5, 3.0), (0.0, 0.0, 0.8), (0.0, 0.0, 1.0), 40.0, width, height)
    return Scene(
        meshes=[sphere, floor],
        materials=[Material(rho_d, rho_s, shininess), Material((0.5, 0.5, 0.5))],
        lights=[PointLight((2.0, -2.0, 4.0), np.full(3, 25.0))],
        camera=camera,
    )


__all__ = [
    "DirectionalLight",
    "ablation_scene",
    "analytic_plane_scene",
    "gradcheck_scene",
    "icosphere",
    "quad",
    "sphere_scene",
    "two_plane_scene",
]
