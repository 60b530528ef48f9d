import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffrender.accel import build_accel
from diffrender.render import Diagnostics, Image, RenderConfig, _finite_rows, estimate_radiance, render
from diffrender.sampler import Sampler
from diffrender.scene import Camera, DirectionalLight, Material, Ray, Scene, TriangleMesh
from diffrender.scenes import analytic_plane_scene, quad, two_plane_scene

from oracles import analytic_center_value, analytic_plane_pixels, two_plane_pixels


def radiance_along(scene, ray, depth=1, seed=0):
    accel = build_accel(scene)
    return estimate_radiance(scene, accel, ray, Sampler(seed), RenderConfig(max_depth=depth))


class TestEstimateRadiance:
    def test_miss_is_black(self):
        scene = analytic_plane_scene()
        np.testing.assert_array_equal(radiance_along(scene, Ray((0, 0, 3), (0, 0, 1)), depth=4), 0.0)

    def test_point_below_light(self):
        scene = analytic_plane_scene(rho_d=0.8, intensity=10.0, light_height=2.0)
        value = radiance_along(scene, Ray((0, 0, 3), (0, 0, -1)))
        np.testing.assert_allclose(value, 0.8 / math.pi * 10 / 4, rtol=1e-12)
        assert value[0] == pytest.approx(0.63662, abs=1e-5)

    def test_oblique_point(self):
        scene = analytic_plane_scene(rho_d=0.5, intensity=4.0, light_height=2.0)
        d = np.array([1.0, 0.5, -3.0])
        d /= np.linalg.norm(d)
        value = radiance_along(scene, Ray((0, 0, 3), d))
        p = np.array([0, 0, 3]) + 1.0 * d * (3 / -d[2])
        dist = np.linalg.norm(p - [0, 0, 2])
        expected = 0.5 / math.pi * 4.0 * (2.0 / dist) / dist**2
        np.testing.assert_allclose(value, expected, rtol=1e-12)

    def test_directional_light(self):
        plane = quad((-5, -5, 0), (10, 0, 0), (0, 10, 0))
        cam = Camera((0, 0, 3), (0, 0, 0), (0, 1, 0), 30, 4, 4)
        travel = np.array([1.0, 0.0, -1.0])
        scene = Scene([plane], [Material(0.6)], [DirectionalLight(travel, (2, 1, 0))], cam)
        value = radiance_along(scene, Ray((0, 0, 3), (0, 0, -1)))
        np.testing.assert_allclose(value, 0.6 / math.pi * np.array([2, 1, 0]) * math.sqrt(0.5), rtol=1e-12)

    def test_shadowed_point(self):
        scene = analytic_plane_scene()
        blocker = quad((-0.5, -0.5, 1.0), (1, 0, 0), (0, 1, 0))
        scene = scene.replace(meshes=list(scene.meshes) + [blocker])
        np.testing.assert_array_equal(radiance_along(scene, Ray((0.1, 0.1, 0.5), (0, 0, -1))), 0.0)
        assert radiance_along(scene, Ray((1.5, 0.1, 0.5), (0, 0, -1)))[0] > 0

    def test_light_behind_surface(self):
        scene = analytic_plane_scene(light_height=-1.0)
        np.testing.assert_array_equal(radiance_along(scene, Ray((0, 0, 3), (0, 0, -1))), 0.0)

    def test_vertex_normals_parallel_to_face(self):
        flat = analytic_plane_scene(8, 8)
        mesh = flat.meshes[0]
        smooth = flat.replace(meshes=[TriangleMesh(mesh.vertices, mesh.indices, 0, np.tile([0, 0, 1.0], (4, 1)))])
        cfg = RenderConfig(spp=4, max_depth=2)
        np.testing.assert_allclose(render(smooth, cfg).pixels, render(flat, cfg).pixels, rtol=1e-6)


class TestRenderImage:
    def test_lightless_scene_is_black(self):
        scene = analytic_plane_scene(16, 16).replace(lights=[])
        assert not render(scene, RenderConfig(spp=2)).pixels.any()

    def test_analytic_plane(self):
        scene = analytic_plane_scene(32, 32)
        img = render(scene, RenderConfig(spp=64, max_depth=1, seed=3))
        ref = analytic_plane_pixels(32, 32, 60.0, 3.0, 2.0, 0.8, 10.0)
        err = np.abs(img.pixels - ref[..., None]).mean()
        assert err < 0.01 * ref.mean()

    def test_same_seed_bit_identical(self):
        scene = two_plane_scene(16, 16)
        cfg = RenderConfig(spp=8, max_depth=3, seed=11)
        assert render(scene, cfg) == render(scene, cfg)

    def test_worker_count_does_not_matter(self):
        scene = two_plane_scene(32, 32)
        cfg = RenderConfig(spp=256, max_depth=2, seed=5)
        one = render(scene, cfg, workers=1)
        three = render(scene, cfg, workers=3)
        assert one == three

    def test_different_seeds_agree_statistically(self):
        scene = analytic_plane_scene(8, 8)
        a = render(scene, RenderConfig(spp=64, max_depth=1, seed=1)).pixels
        b = render(scene, RenderConfig(spp=64, max_depth=1, seed=2)).pixels
        assert a.tobytes() != b.tobytes()
        np.testing.assert_allclose(a.mean(), b.mean(), rtol=1e-3)

    @given(st.integers(0, 2**20), st.integers(1, 5), st.booleans())
    def test_nonnegative_and_finite(self, seed, depth, stratified):
        scene = two_plane_scene(4, 4)
        px = render(scene, RenderConfig(spp=3, max_depth=depth, seed=seed, stratified=stratified)).pixels
        assert np.all(np.isfinite(px)) and np.all(px >= 0)

    def test_image_layout(self):
        img = render(analytic_plane_scene(6, 4), RenderConfig(spp=1))
        assert img.shape == (4, 6, 3) and img.pixels.dtype == np.float32


class TestUnbiased:
    def test_seed_mean_within_three_se(self):
        w = h = 8
        scene = analytic_plane_scene(w, h, fov=90.0)
        ref = analytic_plane_pixels(w, h, 90.0, 3.0, 2.0, 0.8, 10.0, sub=64)
        runs = np.stack([render(scene, RenderConfig(spp=2, max_depth=1, seed=s, stratified=False)).pixels[..., 0]
                         for s in range(50)])
        mean = runs.mean(0)
        se = runs.std(0, ddof=1) / math.sqrt(len(runs))
        z = np.abs(mean - ref) / se
        assert z[h // 2, w // 2] < 3
        assert np.mean(z < 3) >= 0.95

    def test_center_analytic_value(self):
        # the pixel footprint shrinks, so its average approaches the point value
        ref = analytic_plane_pixels(1, 1, 0.01, 3.0, 2.0, 0.8, 10.0)[0, 0]
        assert ref == pytest.approx(analytic_center_value(0.8, 10.0, 2.0), rel=1e-6)


class TestStratification:
    def test_reduces_variance(self):
        scene = analytic_plane_scene(16, 16)
        accel = build_accel(scene)

        def variance(stratified):
            runs = np.stack([
                render(scene, RenderConfig(spp=64, max_depth=1, seed=s, stratified=stratified), accel).pixels[..., 0]
                for s in range(12)
            ])
            return runs.var(0, ddof=1)

        strat, plain = variance(True), variance(False)
        assert np.mean(strat <= plain) >= 0.95
        assert strat.sum() < plain.sum()

    def test_uses_every_stratum_once_when_square(self):
        from diffrender.render import _pixel_jitter

        cfg = RenderConfig(spp=16, seed=4)
        pixel = np.repeat(np.arange(3), 16)
        sample = np.tile(np.arange(16), 3)
        u, v = _pixel_jitter(cfg, pixel, sample, 16)
        cells = (np.floor(u * 4) + 4 * np.floor(v * 4)).reshape(3, 16)
        for row in cells:
            assert sorted(row.tolist()) == list(range(16))


class TestIndirect:
    def test_two_plane_bounce(self):
        w = h = 8
        scene = two_plane_scene(w, h)
        total, indirect = two_plane_pixels(w, h, sub=4, wall_n=96)
        direct_only = render(scene, RenderConfig(spp=64, max_depth=1, seed=0)).pixels[..., 0]
        runs = np.stack([render(scene, RenderConfig(spp=256, max_depth=2, seed=s)).pixels[..., 0]
                         for s in range(8)])
        mean = runs.mean(0)
        se = runs.std(0, ddof=1) / math.sqrt(len(runs))
        assert mean.mean() > direct_only.mean()
        assert indirect.mean() > 0.01 * total.mean()
        image_se = math.sqrt((se**2).sum()) / se.size
        assert abs(mean.mean() - total.mean()) < 3 * image_se + 1e-4 * total.mean()
        assert np.mean(np.abs(mean - total) < 3 * se + 1e-4 * total) >= 0.9


class TestDiagnostics:
    def test_nonfinite_rows_dropped_and_counted(self):
        diag = Diagnostics()
        arr = np.array([[1.0, 2.0, 3.0], [np.nan, 0.0, 0.0], [np.inf, 1.0, 1.0]])
        out = _finite_rows(arr, diag, "nonfinite_radiance")
        np.testing.assert_array_equal(out, [[1, 2, 3], [0, 0, 0], [0, 0, 0]])
        assert diag.nonfinite_radiance == 2

    def test_image_rejects_nan(self):
        with pytest.raises(ValueError):
            Image(np.full((1, 1, 3), np.nan))
