"""Differentiable Monte Carlo path tracing for inverse rendering."""

from .accel import AccelStructure, build_accel, intersect
from .brdf import eval_brdf, sample_brdf
from .gradients import (
    GradcheckReport,
    finite_difference_gradient,
    gradcheck,
    render_with_gradients,
)
from .io import (
    load_config,
    load_scene,
    read_image_pfm,
    save_scene,
    write_image_pfm,
    write_image_png,
)
from .optim import (
    AdamState,
    MetricsReport,
    OptimizeConfig,
    RunHistory,
    adam_step,
    gn_metric,
    mpea_metric,
    mse_loss,
    re_metric,
    reconstruct,
    regularize,
    run_ablation,
    smooth_gradient,
)
from .params import ParameterSelector, ParameterVector, apply, flatten
from .render import Diagnostics, Image, RenderConfig, estimate_radiance, render
from .sampler import Sampler
from .scene import (
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
    sample_light,
)

__version__ = "0.1.0"

__all__ = [
    "AccelStructure",
    "build_accel",
    "intersect",
    "eval_brdf",
    "sample_brdf",
    "GradcheckReport",
    "finite_difference_gradient",
    "gradcheck",
    "render_with_gradients",
    "load_config",
    "load_scene",
    "read_image_pfm",
    "save_scene",
    "write_image_pfm",
    "write_image_png",
    "AdamState",
    "MetricsReport",
    "OptimizeConfig",
    "RunHistory",
    "adam_step",
    "gn_metric",
    "mpea_metric",
    "mse_loss",
    "re_metric",
    "reconstruct",
    "regularize",
    "run_ablation",
    "smooth_gradient",
    "ParameterSelector",
    "ParameterVector",
    "apply",
    "flatten",
    "Diagnostics",
    "Image",
    "RenderConfig",
    "estimate_radiance",
    "render",
    "Sampler",
    "Camera",
    "DegenerateGeometryError",
    "DirectionalLight",
    "Material",
    "PointLight",
    "Ray",
    "Scene",
    "SceneError",
    "TriangleMesh",
    "generate_ray",
    "sample_light",
]
