"""Inverse rendering: loss and metrics, Adam, gradient smoothing, regularisation,
the reconstruction loop and the ablation harness."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .gradients import image_mse, render_with_gradients
from .params import ParameterSelector, ParameterVector, apply, flatten
from .render import Image, RenderConfig, render
from .scene import Scene

logger = logging.getLogger(__name__)


# -- losses and metrics ----------------------------------------------------


def mse_loss(rendered: Image, observed: Image) -> float:
    """Mean squared difference over all pixels and channels."""
    return image_mse(rendered, observed)


def re_metric(ground_truth: Image, rendered: Image) -> float:
    """Reconstruction error; the same kernel as :func:`mse_loss`."""
    return image_mse(ground_truth, rendered)


def mpea_metric(p_gt, p_est) -> float:
    """Mean squared error between true and estimated material parameters."""
    p_gt = np.asarray(p_gt, dtype=np.float64).reshape(-1)
    p_est = np.asarray(p_est, dtype=np.float64).reshape(-1)
    if p_gt.shape != p_est.shape:
        raise ValueError(f"parameter vectors differ in length: {p_gt.size} vs {p_est.size}")
    if p_gt.size == 0:
        raise ValueError("MPEA needs at least one parameter")
    diff = p_gt - p_est
    return float(np.mean(diff * diff))


@dataclass
class GradientRecord:
    raw: np.ndarray
    smoothed: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        self.smoothed = np.asarray(self.smoothed, dtype=np.float64)
        if self.raw.shape != self.smoothed.shape:
            raise ValueError("raw and smoothed gradients must have the same length")


def gn_metric(history) -> float:
    """Mean over iterations of the squared distance between smoothed and raw gradients.

    Accepts a :class:`RunHistory` or a sequence of :class:`GradientRecord`.
    """
    records = history.gradient_records() if isinstance(history, RunHistory) else list(history)
    if not records:
        raise ValueError("gradient noise needs at least one recorded iteration")
    total = 0.0
    for r in records:
        if r.raw is None or r.smoothed is None:
            raise ValueError(f"iteration {r.iteration} has no gradient record")
        diff = r.smoothed - r.raw
        total += float(np.dot(diff, diff))
    return total / len(records)


# -- update rules ----------------------------------------------------------


def smooth_gradient(raw, state: Optional[np.ndarray], beta: float) -> np.ndarray:
    """Exponential moving average; the first call passes ``raw`` through."""
    raw = np.asarray(raw, dtype=np.float64)
    if not 0.0 <= beta < 1.0:
        raise ValueError("smoothing beta must lie in [0, 1)")
    if state is None:
        return raw.copy()
    state = np.asarray(state, dtype=np.float64)
    if state.shape != raw.shape:
        raise ValueError("smoothing state and gradient differ in length")
    return beta * state + (1.0 - beta) * raw


def regularize(theta: ParameterVector, grad, lam: float, prior: ParameterVector) -> np.ndarray:
    """Add the gradient of ``lam * |theta - prior|^2`` on material components only."""
    grad = np.asarray(grad, dtype=np.float64)
    prior_values = prior.values if isinstance(prior, ParameterVector) else np.asarray(prior, dtype=np.float64)
    if not len(theta) == len(grad) == len(prior_values):
        raise ValueError("theta, gradient and prior must have the same length")
    if lam == 0:
        return grad.copy()
    mask = theta.selector.material_mask
    return grad + np.where(mask, 2.0 * lam * (theta.values - prior_values), 0.0)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    nonfinite: int = 0

    @classmethod
    def fresh(cls, size: int, lr=0.02, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        if lr <= 0:
            raise ValueError("learning rate must be > 0")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("Adam decay rates must lie in [0, 1)")
        return cls(np.zeros(size), np.zeros(size), 0, lr, beta1, beta2, eps)


def adam_step(state: AdamState, theta, grad):
    """One Adam update, ``theta - lr * m_hat / sqrt(v_hat + eps)``.

    Returns ``(new_state, new_theta)``; ``theta`` may be an array or a ParameterVector
    and the result has the same type. Non-finite gradient entries count as zero.
    """
    values = theta.values if isinstance(theta, ParameterVector) else np.asarray(theta, dtype=np.float64)
    g = np.array(grad, dtype=np.float64)
    if g.shape != values.shape or state.m.shape != values.shape:
        raise ValueError("theta, gradient and optimizer state must have the same length")
    bad = ~np.isfinite(g)
    g[bad] = 0.0
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_values = values - state.lr * m_hat / np.sqrt(v_hat + state.eps)
    new_state = replace(state, m=m, v=v, t=t, nonfinite=state.nonfinite + int(bad.sum()))
    if isinstance(theta, ParameterVector):
        return new_state, theta.with_values(new_values)
    return new_state, new_values


# -- reconstruction --------------------------------------------------------


@dataclass(frozen=True)
class OptimizeConfig:
    iterations: int = 200
    learning_rate: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    smoothing_beta: float = 0.5
    smoothing_enabled: bool = True
    reg_lambda: float = 1e-3
    convergence_tol: float = 1e-5
    convergence_window: int = 10
    # a loss at or below this counts as converged immediately
    loss_floor: float = 1e-12
    # draw a fresh seed every iteration instead of reusing render.seed
    reseed: bool = False
    render: RenderConfig = field(default_factory=RenderConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        for name in ("beta1", "beta2", "smoothing_beta"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be >= 0")
        if self.convergence_tol < 0 or self.convergence_window < 1:
            raise ValueError("convergence_tol must be >= 0 and convergence_window >= 1")


@dataclass
class IterationRecord:
    t: int
    loss: float
    theta: np.ndarray
    raw_grad: np.ndarray
    smoothed_grad: np.ndarray
    raw_norm: float
    smoothed_norm: float
    gn: float
    wall_time: float
    best_loss: float


@dataclass
class RunHistory:
    records: List[IterationRecord] = field(default_factory=list)
    converged_at: Optional[int] = None

    def append(self, record: IterationRecord):
        if self.records and record.t <= self.records[-1].t:
            raise ValueError("history records must be strictly ordered by t")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    @property
    def best_losses(self) -> np.ndarray:
        return np.minimum.accumulate(self.losses) if self.records else np.zeros(0)

    def gradient_records(self) -> List[GradientRecord]:
        return [GradientRecord(r.raw_grad, r.smoothed_grad, r.t) for r in self.records]

    @property
    def convergence_speed(self) -> int:
        """Iteration at which the run converged, or the number of iterations run."""
        return self.converged_at if self.converged_at is not None else len(self.records)


def converged(losses: Sequence[float], window: int, tol: float, floor: float) -> bool:
    """Window rule: relative change between the means of the last two windows < tol."""
    if losses and losses[-1] <= floor:
        return True
    if len(losses) < 2 * window:
        return False
    cur = float(np.mean(losses[-window:]))
    prev = float(np.mean(losses[-2 * window : -window]))
    if prev <= 0:
        return cur <= floor
    return abs(cur - prev) / prev < tol


def reconstruct(
    initial: Scene,
    selector: ParameterSelector,
    targets: Union[Image, Sequence[Image]],
    config: OptimizeConfig,
    workers: int = 1,
    callback: Optional[Callable[[IterationRecord], None]] = None,
):
    """Fit the selected parameters of ``initial`` to the target image(s).

    Each iteration renders, evaluates the loss and its gradient, smooths the gradient,
    adds the regulariser, and applies an Adam step followed by the parameter
    projection. Stops at convergence or after ``config.iterations``. Returns the scene
    with the lowest recorded loss and the run history.
    """
    targets = [targets] if isinstance(targets, Image) else list(targets)
    if not targets:
        raise ValueError("reconstruct needs at least one target image")
    selector.validate(initial)
    theta = flatten(initial, selector)
    prior = theta
    state = AdamState.fresh(len(theta), config.learning_rate, config.beta1, config.beta2, config.epsilon)
    history = RunHistory()
    smoothed = None
    gn_total = 0.0
    best = (np.inf, theta)
    scene = initial
    start = time.perf_counter()
    for t in range(1, config.iterations + 1):
        render_cfg = config.render.with_seed(config.render.seed + t - 1) if config.reseed else config.render
        result = render_with_gradients(scene, theta, targets, render_cfg, workers=workers)
        raw = result.grad
        if config.smoothing_enabled:
            smoothed = smooth_gradient(raw, smoothed, config.smoothing_beta)
        else:
            smoothed = raw.copy()
        diff = smoothed - raw
        gn_total += float(np.dot(diff, diff))
        if result.loss < best[0]:
            best = (result.loss, theta)
        record = IterationRecord(
            t=t,
            loss=result.loss,
            theta=theta.values.copy(),
            raw_grad=raw,
            smoothed_grad=smoothed.copy(),
            raw_norm=float(np.linalg.norm(raw)),
            smoothed_norm=float(np.linalg.norm(smoothed)),
            gn=gn_total / t,
            wall_time=time.perf_counter() - start,
            best_loss=best[0],
        )
        history.append(record)
        if callback is not None:
            callback(record)
        if converged(list(history.losses), config.convergence_window, config.convergence_tol, config.loss_floor):
            history.converged_at = t
            break
        step_grad = regularize(theta, smoothed, config.reg_lambda, prior)
        state, theta = adam_step(state, theta, step_grad)
        scene = apply(scene, theta)
        # keep theta equal to what the projection actually stored
        theta = flatten(scene, selector)
    if history.converged_at is None:
        logger.info("no convergence within %d iterations", config.iterations)
    return apply(initial, best[1]), history


# -- ablation --------------------------------------------------------------


@dataclass
class MetricsReport:
    re: float
    mpea: Optional[float]
    gn: float
    cs: int
    final_loss: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


ABLATION_VARIANTS = ("full", "no-smoothing", "no-regularization")


def ablation_configs(config: OptimizeConfig) -> dict:
    return {
        "full": config,
        "no-smoothing": replace(config, smoothing_enabled=False),
        "no-regularization": replace(config, reg_lambda=0.0),
    }


def evaluate_run(final: Scene, history: RunHistory, selector: ParameterSelector, targets: Sequence[Image],
                 render_config: RenderConfig, truth: Optional[ParameterVector] = None) -> MetricsReport:
    image = render(final, render_config)
    re = float(np.mean([re_metric(t, image) for t in targets]))
    mpea = None
    if truth is not None:
        est = flatten(final, selector).values
        mask = selector.material_mask
        if not mask.any():
            mask = np.ones(len(selector), dtype=bool)
        mpea = mpea_metric(truth.values[mask], est[mask])
    return MetricsReport(re, mpea, gn_metric(history), history.convergence_speed, float(history.losses[-1]))


def run_ablation(
    initial: Scene,
    selector: ParameterSelector,
    targets: Union[Image, Sequence[Image]],
    config: OptimizeConfig,
    truth: Optional[ParameterVector] = None,
    workers: int = 1,
    eval_render: Optional[RenderConfig] = None,
) -> dict:
    """Run the full method and the two ablated variants from the same start and seeds.

    RE is measured on a render of each final scene with ``eval_render`` (default: the
    optimisation's render config). Returns ``{variant: MetricsReport}`` in the order
    full, no-smoothing, no-regularization.
    """
    targets = [targets] if isinstance(targets, Image) else list(targets)
    eval_render = eval_render or config.render
    table = {}
    for name, cfg in ablation_configs(config).items():
        final, history = reconstruct(initial, selector, targets, cfg, workers=workers)
        table[name] = evaluate_run(final, history, selector, targets, eval_render, truth)
    return table


def format_metrics_table(table: dict) -> str:
    lines = [f"{'method':<18}  {'RE':>12}  {'MPEA':>12}  {'GN':>12}  {'CS':>5}"]
    for name, rep in table.items():
        mpea = f"{rep.mpea:12.6g}" if rep.mpea is not None else f"{'-':>12}"
        lines.append(f"{name:<18}  {rep.re:12.6g}  {mpea}  {rep.gn:12.6g}  {rep.cs:5d}")
    return "\n".join(lines)
