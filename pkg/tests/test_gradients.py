import math

import numpy as np
import pytest

from diffrender.gradients import (
    cosine_similarity,
    finite_difference_gradient,
    gradcheck,
    relative_errors,
    render_with_gradients,
)
from diffrender.params import INTENSITY, RHO_D, RHO_S, SHININESS, ParameterSelector, flatten
from diffrender.render import Image, RenderConfig, render
from diffrender.scene import Material
from diffrender.scenes import analytic_plane_scene, gradcheck_scene, quad, two_plane_scene


def full_selector(scene):
    sel = ParameterSelector()
    for i in range(len(scene.materials)):
        sel = sel + ParameterSelector.material(i, RHO_D, RHO_S, SHININESS)
    return sel + ParameterSelector.light(0)


class TestAdjointBasics:
    def test_zero_at_optimum(self):
        scene = gradcheck_scene(8, 8)
        cfg = RenderConfig(spp=4, max_depth=2, seed=2)
        theta = flatten(scene, full_selector(scene))
        res = render_with_gradients(scene, theta, render(scene, cfg), cfg)
        assert res.loss == 0.0
        assert not res.grad.any()

    def test_primal_consistency(self):
        scene = two_plane_scene(8, 8)
        cfg = RenderConfig(spp=8, max_depth=3, seed=4)
        theta = flatten(scene, ParameterSelector.material(1))
        res = render_with_gradients(scene, theta, Image.zeros(8, 8), cfg)
        assert res.image == render(scene, cfg)

    def test_resolution_mismatch(self):
        scene = two_plane_scene(8, 8)
        with pytest.raises(ValueError, match="camera renders"):
            render_with_gradients(scene, flatten(scene, ParameterSelector.material(0)), Image.zeros(4, 4),
                                  RenderConfig(spp=1))

    def test_single_pixel_albedo(self):
        scene = analytic_plane_scene(1, 1, fov=1.0)
        cfg = RenderConfig(spp=64, max_depth=1, seed=0)
        theta = flatten(scene, ParameterSelector([(RHO_D, 0, 1)]))
        target = Image(np.full((1, 1, 3), 0.1, dtype=np.float32))
        adj = render_with_gradients(scene, theta, target, cfg).grad
        fd = finite_difference_gradient(scene, theta, target, cfg)
        assert relative_errors(adj, fd)[0] < 1e-2

    def test_plane_translation_matches_closed_form(self):
        rho, inten, h = 0.8, 10.0, 2.0
        scene = analytic_plane_scene(1, 1, rho_d=rho, intensity=inten, light_height=h, fov=0.5)
        cfg = RenderConfig(spp=16, max_depth=1, seed=0)
        sel = ParameterSelector.vertices(0, [0, 1, 2, 3], [2])
        res = render_with_gradients(scene, flatten(scene, sel), Image.zeros(1, 1), cfg)
        value = rho / math.pi * inten / h**2
        # raising the plane by dz shortens the light distance: dL/dz = 2 rho I / (pi h^3)
        d_value = 2 * rho * inten / (math.pi * h**3)
        expected = 2.0 * value * d_value
        assert res.grad.sum() == pytest.approx(expected, rel=5e-2)

    def test_unreachable_parameters_exactly_zero(self):
        base = analytic_plane_scene(8, 8)
        hidden = quad((-1, -1, -5), (2, 0, 0), (0, 2, 0), material_id=1)
        scene = base.replace(meshes=[base.meshes[0], hidden], materials=[base.materials[0], Material(0.4)])
        sel = ParameterSelector.material(1, RHO_D, SHININESS) + ParameterSelector.vertices(1, [0, 2])
        cfg = RenderConfig(spp=8, max_depth=3, seed=1)
        theta = flatten(scene, sel)
        res = render_with_gradients(scene, theta, Image.zeros(8, 8), cfg)
        assert not res.grad.any()
        fd = finite_difference_gradient(scene, theta, Image.zeros(8, 8), cfg)
        assert np.all(np.abs(fd) < 1e-6)

    def test_linear_in_target(self):
        scene = gradcheck_scene(8, 8)
        cfg = RenderConfig(spp=4, max_depth=1, seed=3)
        theta = flatten(scene, full_selector(scene))
        rng = np.random.default_rng(0)
        t1 = Image(rng.random((8, 8, 3)).astype(np.float32))
        t2 = Image(rng.random((8, 8, 3)).astype(np.float32))
        g1 = render_with_gradients(scene, theta, t1, cfg).grad
        g2 = render_with_gradients(scene, theta, t2, cfg).grad
        for alpha in (0.0, 0.5, 1.0):
            blend = Image(alpha * t1.pixels.astype(np.float64) + (1 - alpha) * t2.pixels.astype(np.float64))
            g = render_with_gradients(scene, theta, blend, cfg).grad
            np.testing.assert_allclose(g, alpha * g1 + (1 - alpha) * g2, rtol=1e-5, atol=1e-9)

    def test_multiple_targets_average(self):
        scene = gradcheck_scene(8, 8)
        cfg = RenderConfig(spp=2, max_depth=1, seed=3)
        theta = flatten(scene, ParameterSelector.material(0))
        a, b = Image.zeros(8, 8), Image(np.full((8, 8, 3), 0.3, dtype=np.float32))
        both = render_with_gradients(scene, theta, [a, b], cfg)
        ga = render_with_gradients(scene, theta, a, cfg)
        gb = render_with_gradients(scene, theta, b, cfg)
        assert both.loss == pytest.approx(0.5 * (ga.loss + gb.loss), rel=1e-12)
        np.testing.assert_allclose(both.grad, 0.5 * (ga.grad + gb.grad), rtol=1e-9)


class TestFiniteDifferences:
    def test_quadratic_loss_exact(self):
        a = 0.3
        scene = analytic_plane_scene(2, 2)
        sel = ParameterSelector([(RHO_D, 0, 0)])

        def fake_render(s, cfg):
            return Image(np.full((2, 2, 3), s.materials[0].rho_d[0]))

        target = Image(np.full((2, 2, 3), a, dtype=np.float32))
        theta = flatten(scene, sel)
        fd = finite_difference_gradient(scene, theta, target, RenderConfig(), h=1e-3, render_fn=fake_render)
        # pixels are float32, so the exact value is 2 (theta - a) up to float32 rounding
        exact = 2 * (np.float32(0.8) - np.float32(a))
        assert fd[0] == pytest.approx(exact, rel=1e-3)

    def test_bad_step(self):
        scene = analytic_plane_scene(2, 2)
        theta = flatten(scene, ParameterSelector.material(0))
        with pytest.raises(ValueError):
            finite_difference_gradient(scene, theta, Image.zeros(2, 2), RenderConfig(spp=1), h=0.0)

    def test_relative_error_floor(self):
        rel = relative_errors(np.array([1.0, 1e-9]), np.array([1.0, 0.0]))
        assert rel[0] == 0.0 and rel[1] == pytest.approx(1e-6)

    def test_cosine(self):
        assert cosine_similarity(np.array([1.0, 0]), np.array([2.0, 0])) == 1.0
        assert cosine_similarity(np.zeros(2), np.zeros(2)) == 1.0
        assert cosine_similarity(np.array([1.0, 0]), np.zeros(2)) == 0.0


class TestGradcheck:
    def test_small_scene_two_steps(self):
        scene = gradcheck_scene(8, 8)
        cfg = RenderConfig(spp=64, max_depth=1, seed=9)
        sel = full_selector(scene) + ParameterSelector.vertices(0, [0, 2], [2])
        theta = flatten(scene, sel)
        target = Image.zeros(8, 8)
        report = gradcheck(scene, theta, target, cfg)
        assert report.ok, report.format()
        assert report.cosine > 0.99
        fd_half = finite_difference_gradient(
            scene, theta, target, cfg, h=0.5 * np.array([max(1e-3 * abs(v), 1e-4) for v in theta.values])
        )
        adj = np.array([r.adjoint for r in report.rows])
        assert cosine_similarity(adj, fd_half) > 0.99
        assert "cosine similarity" in report.format()

    def test_indirect_diffuse_scene(self):
        scene = two_plane_scene(8, 8)
        cfg = RenderConfig(spp=64, max_depth=2, seed=1)
        sel = ParameterSelector.material(0) + ParameterSelector.material(1) + ParameterSelector([(INTENSITY, 0, 0)])
        report = gradcheck(scene, flatten(scene, sel), Image.zeros(8, 8), cfg)
        assert report.ok, report.format()
        assert report.cosine > 0.999
