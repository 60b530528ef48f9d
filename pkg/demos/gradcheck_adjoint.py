"""
Checking adjoint gradients with finite differences
==================================================

The adjoint pass differentiates the image loss with respect to materials,
the light and vertex positions. Here we compare it coordinate by coordinate
with central differences that reuse the same random numbers.
"""

import numpy as np

from diffrender import Image, RenderConfig, flatten, gradcheck
from diffrender.params import RHO_D, RHO_S, SHININESS, ParameterSelector
from diffrender.scenes import gradcheck_scene

# three materials and a light at the eye; the back wall covers the view,
# so moving it along z never changes which surface a pixel sees
scene = gradcheck_scene(16, 16)

selector = ParameterSelector()
for i in range(len(scene.materials)):
    selector = selector + ParameterSelector.material(i, RHO_D, RHO_S, SHININESS)
selector = selector + ParameterSelector.light(0) + ParameterSelector.vertices(0, [0, 1], [2])
theta = flatten(scene, selector)
print(len(theta), "parameters")

# a black target means every parameter that brightens the image has a gradient
report = gradcheck(scene, theta, Image.zeros(16, 16), RenderConfig(spp=64, max_depth=1, seed=3))
print(report.format())
print("all within threshold:", report.ok)

worst = max(report.rows, key=lambda r: r.relative_error)
print(f"worst coordinate: {worst.parameter} ({worst.relative_error:.2e})")
print("largest adjoint entries:", np.round(sorted(abs(r.adjoint) for r in report.rows)[-3:], 6))
