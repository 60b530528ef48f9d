import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffrender.scene import (
    Camera,
    DegenerateGeometryError,
    DirectionalLight,
    Material,
    PointLight,
    Ray,
    Scene,
    SceneError,
    TriangleMesh,
    generate_ray,
    generate_rays,
    sample_light,
)

from oracles import pinhole_directions


def down_camera(width=5, height=5, fov=60.0):
    return Camera((0, 0, 3), (0, 0, 0), (0, 1, 0), fov, width, height)


class TestValidation:
    def test_energy_violation_rejected(self):
        with pytest.raises(SceneError, match="energy conservation"):
            Material((0.9, 0.9, 0.9), (0.3, 0.3, 0.3), 10)

    def test_energy_boundary_accepted(self):
        m = Material((0.7, 0.5, 0.0), (0.3, 0.5, 1.0), 5)
        np.testing.assert_array_equal(m.rho_d + m.rho_s, [1.0, 1.0, 1.0])

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(rho_d=(-0.1, 0, 0)),
            dict(rho_d=(1.2, 0, 0)),
            dict(rho_d=(0.5, 0.5, 0.5), shininess=-1),
            dict(rho_d=(0.5, 0.5, 0.5), shininess=math.nan),
            dict(rho_d=(0.5, 0.5)),
        ],
    )
    def test_bad_materials(self, kwargs):
        with pytest.raises(SceneError):
            Material(**kwargs)

    def test_negative_intensity(self):
        with pytest.raises(SceneError):
            PointLight((0, 0, 1), (-1, 0, 0))

    def test_camera_checks(self):
        with pytest.raises(SceneError):
            Camera((0, 0, 1), (0, 0, 1))
        with pytest.raises(SceneError):
            Camera((0, 0, 1), (0, 0, 0), (0, 0, 1))
        with pytest.raises(SceneError):
            Camera((0, 0, 1), (0, 0, 0), (0, 1, 0), 180.0)
        with pytest.raises(SceneError):
            Camera((0, 0, 1), (0, 0, 0), (0, 1, 0), 45.0, 0, 4)

    def test_mesh_index_range(self):
        with pytest.raises(SceneError):
            TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 3)])

    def test_material_id_checked(self):
        mesh = TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)], material_id=1)
        with pytest.raises(SceneError, match="material_id"):
            Scene([mesh], [Material(0.5)], [], down_camera())

    def test_ray_requires_unit_direction(self):
        with pytest.raises(SceneError):
            Ray((0, 0, 0), (0, 0, 2))

    def test_degenerate_is_scene_error(self):
        assert issubclass(DegenerateGeometryError, SceneError)

    def test_scene_is_immutable(self):
        m = Material(0.5)
        with pytest.raises(ValueError):
            m.rho_d[0] = 0.1


class TestGenerateRay:
    def test_center_pixel_looks_forward(self):
        ray = generate_ray(down_camera(), 2, 2)
        np.testing.assert_allclose(ray.direction, [0, 0, -1], atol=1e-6)
        np.testing.assert_array_equal(ray.origin, [0, 0, 3])

    def test_border_directions_90_degrees(self):
        cam = Camera((0, 0, 0), (0, 0, -1), (0, 1, 0), 90.0, 1, 4)
        _, top = generate_rays(cam, np.array([0]), np.array([0]), np.array([0.5]), np.array([0.0]))
        _, bottom = generate_rays(cam, np.array([0]), np.array([3]), np.array([0.5]), np.array([1.0]))
        s = math.sqrt(0.5)
        np.testing.assert_allclose(top[0], [0, s, -s], atol=1e-12)
        np.testing.assert_allclose(bottom[0], [0, -s, -s], atol=1e-12)

    def test_matches_independent_pinhole(self):
        cam = Camera((1, 2, 3), (0, 0.5, 0), (0, 1, 0), 40.0, 7, 5)
        rng = np.random.default_rng(3)
        px, py = rng.integers(0, 7, 50), rng.integers(0, 5, 50)
        u, v = rng.random(50), rng.random(50)
        _, d = generate_rays(cam, px, py, u, v)
        ref = pinhole_directions((1, 2, 3), (0, 0.5, 0), (0, 1, 0), 40.0, 7, 5, px + u, py + v)
        np.testing.assert_allclose(d, ref, atol=1e-12)

    def test_jitter_stays_within_footprint(self):
        cam = down_camera(16, 16, 45.0)
        a = generate_ray(cam, 3, 9, (0.0, 0.0)).direction
        b = generate_ray(cam, 3, 9, (1 - 1e-9, 1 - 1e-9)).direction
        c = generate_ray(cam, 4, 10, (0.0, 0.0)).direction
        assert np.linalg.norm(a - b) < np.linalg.norm(a - c) * (1 + 1e-6)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            generate_ray(down_camera(), 5, 0)
        with pytest.raises(IndexError):
            generate_ray(down_camera(), 0, -1)

    @given(st.integers(0, 4), st.integers(0, 4), st.floats(0, 0.999), st.floats(0, 0.999))
    def test_deterministic_and_unit(self, px, py, u, v):
        cam = down_camera()
        a = generate_ray(cam, px, py, (u, v))
        b = generate_ray(cam, px, py, (u, v))
        assert a.direction.tobytes() == b.direction.tobytes()
        assert abs(np.linalg.norm(a.direction) - 1) < 1e-12


class TestSampleLight:
    def test_inverse_square(self):
        s = sample_light(PointLight((0, 0, 2), (10, 10, 10)), (0, 0, 0))
        np.testing.assert_allclose(s.weight, [2.5, 2.5, 2.5], rtol=0, atol=1e-15)
        np.testing.assert_allclose(s.direction, [0, 0, 1])
        assert s.distance == 2.0

    def test_ratio_four(self):
        light = PointLight((0, 0, 0), (3, 3, 3))
        near = sample_light(light, (0.0, 0.0, 1.5))
        far = sample_light(light, (0.0, 0.0, 3.0))
        np.testing.assert_array_equal(near.weight / far.weight, [4, 4, 4])

    def test_directional(self):
        s = sample_light(DirectionalLight((0, 0, -1), (1, 0, 0)), (5, 5, 5))
        np.testing.assert_array_equal(s.weight, [1, 0, 0])
        assert s.distance == math.inf
        np.testing.assert_array_equal(s.direction, [0, 0, 1])

    def test_coincident_point(self):
        with pytest.raises(DegenerateGeometryError):
            sample_light(PointLight((1, 1, 1), 1.0), (1, 1, 1))


class TestEquality:
    def test_field_equality(self):
        a = Scene([TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])], [Material(0.5)],
                  [PointLight((0, 0, 1), 1.0)], down_camera())
        b = Scene([TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])], [Material(0.5)],
                  [PointLight((0, 0, 1), 1.0)], down_camera())
        assert a == b
        assert a != a.replace(materials=[Material(0.4)])

    def test_vertex_normals_normalized_once(self):
        n = np.array([[0, 0, 2.0], [0, 0, 1.0], [0.6, 0, 0.8]])
        mesh = TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)], 0, n)
        again = TriangleMesh(mesh.vertices, mesh.indices, 0, mesh.normals)
        np.testing.assert_allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)
        assert again == mesh
