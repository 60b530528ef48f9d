"""
Forward rendering against a closed form
=======================================

A Lambertian plane under a point light has a radiance we can write down:
rho / pi * I / d^2 * cos(theta). We render it with the path tracer and
compare every pixel with that value.
"""

import math
import os
import sys

import numpy as np

from diffrender import RenderConfig, render, write_image_pfm, write_image_png
from diffrender.scenes import analytic_plane_scene

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_output"
os.makedirs(out_dir, exist_ok=True)

# 64x64 camera three units above the plane, light two units above it
scene = analytic_plane_scene(64, 64, rho_d=0.8, intensity=10.0, light_height=2.0)
image = render(scene, RenderConfig(spp=64, max_depth=1, seed=0))

# the point directly under the light: cos = 1, d = 2
center = image.pixels[32, 32, 0]
print(f"rendered centre pixel {center:.5f}, closed form {0.8 / math.pi * 10 / 4:.5f}")

# radiance falls off towards the corners as cos(theta) / d^2
print("corner / centre ratio:", float(image.pixels[0, 0, 0] / center))

# more indirect bounces change nothing here: a single plane cannot see itself
deep = render(scene, RenderConfig(spp=64, max_depth=4, seed=0))
print("max difference with depth 4:", float(np.abs(deep.pixels - image.pixels).max()))

write_image_pfm(image, os.path.join(out_dir, "plane.pfm"))
write_image_png(image, os.path.join(out_dir, "plane.png"))
print("wrote", os.path.join(out_dir, "plane.pfm"))
