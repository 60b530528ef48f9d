"""Image-loss gradients: the detached adjoint and a finite-difference oracle."""

from __future__ import annotations

from typing import Callable, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from .accel import build_accel
from .params import VERTEX, ParameterVector, apply
from .render import Diagnostics, Image, RenderConfig, render, render_pass
from .scene import Scene


class GradientResult(NamedTuple):
    image: Image
    loss: float
    grad: np.ndarray


def image_mse(rendered: Image, observed: Image) -> float:
    """Mean over pixels and channels of the squared difference, in float64."""
    if rendered.shape != observed.shape:
        raise ValueError(f"image dimensions differ: {rendered.shape} vs {observed.shape}")
    diff = rendered.pixels.astype(np.float64) - observed.pixels.astype(np.float64)
    return float(np.mean(diff * diff))


def _as_targets(target) -> List[Image]:
    targets = [target] if isinstance(target, Image) else list(target)
    if not targets:
        raise ValueError("at least one target image is required")
    return targets


def render_with_gradients(
    scene: Scene,
    theta: ParameterVector,
    target: Union[Image, Sequence[Image]],
    config: RenderConfig,
    workers: int = 1,
    diagnostics: Optional[Diagnostics] = None,
) -> GradientResult:
    """Render, evaluate the MSE loss and its gradient with respect to ``theta``.

    With several targets the loss is the mean of the per-target losses. The returned
    image is bit-identical to ``render(apply(scene, theta), config)``.
    """
    scene = apply(scene, theta)
    targets = _as_targets(target)
    cam = scene.camera
    for t in targets:
        if (t.width, t.height) != (cam.width, cam.height):
            raise ValueError(
                f"target is {t.width}x{t.height} but the camera renders {cam.width}x{cam.height}"
            )
    accel = build_accel(scene)
    flat_targets = [t.pixels.reshape(-1, 3).astype(np.float64) for t in targets]
    norm = 2.0 / (3.0 * cam.width * cam.height * len(targets))

    def adjoint(start, stop, values):
        v = values.astype(np.float64)
        return norm * sum(v - ft[start:stop] for ft in flat_targets)

    image, grads, diag = render_pass(accel, config, adjoint, workers)
    grad = theta.selector.gather(grads, accel)
    bad = ~np.isfinite(grad)
    if np.any(bad):
        diag.nonfinite_gradient += int(bad.sum())
        grad[bad] = 0.0
    if diagnostics is not None:
        diagnostics.merge(diag)
    loss = float(np.mean([image_mse(image, t) for t in targets]))
    return GradientResult(image, loss, grad)


def default_steps(theta: ParameterVector) -> np.ndarray:
    """Per-coordinate finite-difference steps.

    ``max(1e-3 |theta|, 1e-4)`` for material and light scalars, 1e-3 scene units for
    vertex coordinates.
    """
    steps = np.maximum(1e-3 * np.abs(theta.values), 1e-4)
    for i, e in enumerate(theta.selector):
        if e.target == VERTEX:
            steps[i] = 1e-3
    return steps


def finite_difference_gradient(
    scene: Scene,
    theta: ParameterVector,
    target: Union[Image, Sequence[Image]],
    config: RenderConfig,
    h=None,
    render_fn: Optional[Callable[[Scene, RenderConfig], Image]] = None,
) -> np.ndarray:
    """Central differences of the loss, re-rendering with the same seed on both sides.

    ``h`` may be a scalar, a per-coordinate array, or None for :func:`default_steps`.
    ``render_fn`` replaces the renderer (useful for checking the differencing itself).
    """
    targets = _as_targets(target)
    render_fn = render_fn or render
    steps = default_steps(theta) if h is None else np.broadcast_to(np.asarray(h, dtype=float), (len(theta),))
    if np.any(steps <= 0):
        raise ValueError("finite-difference step must be > 0")

    def loss_at(values):
        img = render_fn(apply(scene, theta.with_values(values)), config)
        return float(np.mean([image_mse(img, t) for t in targets]))

    grad = np.zeros(len(theta))
    for k in range(len(theta)):
        plus = theta.values.copy()
        minus = theta.values.copy()
        plus[k] += steps[k]
        minus[k] -= steps[k]
        grad[k] = (loss_at(plus) - loss_at(minus)) / (2.0 * steps[k])
    return grad


class GradcheckRow(NamedTuple):
    parameter: str
    adjoint: float
    finite_difference: float
    relative_error: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.relative_error <= self.threshold


def relative_errors(adjoint: np.ndarray, fd: np.ndarray, floor_fraction: float = 1e-3) -> np.ndarray:
    """``|a - f| / max(|f|, floor_fraction * max|f|, 1e-12)`` per coordinate.

    The floor keeps coordinates whose true derivative is ~0 from amplifying noise.
    """
    scale = max(float(np.max(np.abs(fd), initial=0.0)), float(np.max(np.abs(adjoint), initial=0.0)))
    denom = np.maximum(np.abs(fd), max(floor_fraction * scale, 1e-12))
    return np.abs(adjoint - fd) / denom


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 and nb == 0:
        return 1.0
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class GradcheckReport(NamedTuple):
    rows: List[GradcheckRow]
    cosine: float
    loss: float

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def format(self) -> str:
        width = max([len(r.parameter) for r in self.rows] + [9])
        lines = [f"{'parameter':<{width}}  {'adjoint':>14}  {'finite-diff':>14}  {'rel.err':>10}  ok"]
        for r in self.rows:
            lines.append(
                f"{r.parameter:<{width}}  {r.adjoint:>14.6e}  {r.finite_difference:>14.6e}  "
                f"{r.relative_error:>10.3e}  {'yes' if r.ok else 'NO'}"
            )
        lines.append(f"cosine similarity: {self.cosine:.6f}   loss: {self.loss:.6e}")
        return "\n".join(lines)


def gradcheck(
    scene: Scene,
    theta: ParameterVector,
    target: Union[Image, Sequence[Image]],
    config: RenderConfig,
    h=None,
    threshold: float = 1e-2,
    vertex_threshold: float = 5e-2,
) -> GradcheckReport:
    result = render_with_gradients(scene, theta, target, config)
    fd = finite_difference_gradient(scene, theta, target, config, h)
    rel = relative_errors(result.grad, fd)
    rows = [
        GradcheckRow(
            e.label, float(a), float(f), float(r), vertex_threshold if e.target == VERTEX else threshold
        )
        for e, a, f, r in zip(theta.selector, result.grad, fd, rel)
    ]
    return GradcheckReport(rows, cosine_similarity(result.grad, fd), result.loss)


__all__ = [
    "GradcheckReport",
    "GradientResult",
    "cosine_similarity",
    "default_steps",
    "finite_difference_gradient",
    "gradcheck",
    "image_mse",
    "relative_errors",
    "render_with_gradients",
]
