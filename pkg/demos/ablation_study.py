"""
Ablating smoothing and regularisation
=====================================

The same reconstruction is run three times from one starting point and one
seed sequence: the full method, without gradient smoothing and without the
material prior. Four samples per pixel make the gradients noisy.
"""

import sys

from diffrender import OptimizeConfig, RenderConfig, flatten, render, run_ablation
from diffrender.optim import format_metrics_table
from diffrender.params import RHO_D, RHO_S, ParameterSelector
from diffrender.scenes import ablation_scene

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

# glossy sphere on a diffuse floor; we fit the sphere's diffuse and specular albedo
truth = ablation_scene()
start = ablation_scene(rho_d=(0.3, 0.3, 0.3))
selector = ParameterSelector.material(0, RHO_D, RHO_S)
target = render(truth, RenderConfig(spp=256, max_depth=2, seed=1000))

# a fresh seed each iteration; the 1e-3 tolerance lets the window rule fire under this much noise
config = OptimizeConfig(iterations=150, reseed=True, convergence_tol=1e-3,
                        render=RenderConfig(spp=4, max_depth=2, seed=1000 * seed))
table = run_ablation(start, selector, target, config, truth=flatten(truth, selector),
                     eval_render=RenderConfig(spp=64, max_depth=2, seed=999))
print(format_metrics_table(table))

# single seeds disagree with each other; the acceptance suite averages six of them
