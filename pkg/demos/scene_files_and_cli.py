"""
Scene documents, images and the command line
============================================

Scenes and run settings live in JSON documents; images are written as PFM.
This script writes a small scene, renders it through the command-line entry
point and reads the result back.
"""

import json
import os
import sys

from diffrender import load_scene, read_image_pfm, save_scene
from diffrender.cli import main
from diffrender.params import ParameterSelector
from diffrender.scenes import analytic_plane_scene

out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_output"
os.makedirs(out_dir, exist_ok=True)
scene_path = os.path.join(out_dir, "plane.json")
config_path = os.path.join(out_dir, "config.json")

# the optimize block records which parameters a later fit should touch
scene = analytic_plane_scene(16, 16, rho_d=0.6)
save_scene(scene, scene_path, ParameterSelector.material(0))
loaded, selector = load_scene(scene_path)
print("round trip exact:", loaded == scene, "| selected:", [e.label for e in selector])

with open(config_path, "w") as fh:
    json.dump({"schema_version": 1, "render": {"spp": 16, "max_depth": 1, "seed": 0}}, fh)

# same as: python -m diffrender render --scene ... --config ... --out ...
pfm = os.path.join(out_dir, "plane_cli.pfm")
code = main(["render", "--scene", scene_path, "--config", config_path, "--out", pfm])
print("exit code", code, "| image", read_image_pfm(pfm).shape)

# comparing an image with itself gives RE 0
main(["metrics", "--gt", pfm, "--render", pfm])

# a malformed document is a domain error (exit 1), a bad flag a usage error (exit 2)
with open(os.path.join(out_dir, "broken.json"), "w") as fh:
    json.dump({"schema_version": 1}, fh)
print("broken scene ->", main(["render", "--scene", os.path.join(out_dir, "broken.json"),
                                "--config", config_path, "--out", pfm]))
print("unknown flag ->", main(["render", "--colour"]))
