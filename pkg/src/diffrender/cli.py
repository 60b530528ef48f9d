"""Command-line entry point: render, optimize, gradcheck, metrics and ablate.

Exit codes: 0 success, 1 domain error (bad scene, bad file, failed check), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from . import io
from .gradients import gradcheck
from .optim import format_metrics_table, gn_metric, mpea_metric, re_metric, reconstruct, run_ablation
from .params import ParameterSelector, ParameterVector, flatten
from .render import Image, render


class DomainError(Exception):
    pass


def _load(args):
    doc = io.load_scene_document(args.scene)
    cfg = io.load_config(args.config) if args.config else io.RunConfig()
    doc.scene = cfg.apply_resolution(doc.scene)
    return doc, cfg


def _targets(paths) -> List[Image]:
    return [io.read_image_pfm(p) for p in paths]


def _params(path: str) -> np.ndarray:
    """Parameter values from a JSON array, or from a scene document's material selection."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, list):
        return np.array(data, dtype=np.float64)
    doc = io.parse_scene_document(data)
    sel = ParameterSelector([e for e in doc.selector if e.is_material] or list(doc.selector))
    return flatten(doc.scene, sel).values


def cmd_render(args) -> int:
    doc, cfg = _load(args)
    image = render(doc.scene, cfg.render, workers=cfg.workers)
    io.write_image_pfm(image, args.out)
    if args.png:
        io.write_image_png(image, args.png)
    print(f"wrote {args.out} ({image.width}x{image.height}, spp={cfg.render.spp})")
    return 0


def cmd_optimize(args) -> int:
    doc, cfg = _load(args)
    if not len(doc.selector):
        raise DomainError("the scene document selects no parameters (optimize.parameters is empty)")
    targets = _targets(args.target)
    initial = doc.initial_scene()
    labels = [e.label for e in doc.selector]
    writer = io.HistoryWriter(args.history, labels) if args.history else None
    try:
        final, history = reconstruct(initial, doc.selector, targets, cfg.optimize, cfg.workers, writer)
    finally:
        if writer is not None:
            writer.close()
    if args.history:
        with open(args.history, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"converged_at": history.converged_at, "iterations": len(history)}) + "\n")
    io.save_scene(final, args.out_scene, doc.selector)
    losses = history.losses
    status = f"converged at iteration {history.converged_at}" if history.converged_at else "iteration cap reached"
    print(f"{status}; loss {losses[0]:.6g} -> best {losses.min():.6g}")
    for label, value in zip(labels, flatten(final, doc.selector).values):
        print(f"  {label} = {value:.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    doc, cfg = _load(args)
    if not len(doc.selector):
        raise DomainError("the scene document selects no parameters (optimize.parameters is empty)")
    if args.target:
        targets = _targets(args.target)
        scene = doc.initial_scene()
    elif doc.overrides:
        targets = [render(doc.scene, cfg.render)]
        scene = doc.initial_scene()
    else:
        # a black target gives every selected parameter a non-trivial derivative
        cam = doc.scene.camera
        targets = [Image.zeros(cam.width, cam.height)]
        scene = doc.scene
    theta = flatten(scene, doc.selector)
    report = gradcheck(scene, theta, targets, cfg.render, h=args.h,
                       threshold=cfg.gradcheck_threshold, vertex_threshold=cfg.gradcheck_vertex_threshold)
    print(report.format())
    if not report.ok:
        print("gradcheck FAILED: relative error above threshold", file=sys.stderr)
        return 1
    return 0


def cmd_metrics(args) -> int:
    gt, est = io.read_image_pfm(args.gt), io.read_image_pfm(args.render)
    report = {"re": re_metric(gt, est)}
    if (args.params_gt is None) != (args.params_est is None):
        raise DomainError("--params-gt and --params-est must be given together")
    if args.params_gt:
        report["mpea"] = mpea_metric(_params(args.params_gt), _params(args.params_est))
    if args.history:
        history = io.read_history(args.history)
        report["gn"] = gn_metric(history)
        report["cs"] = history.convergence_speed
    for key, value in report.items():
        print(f"{key.upper()}: {value:.10g}")
    if args.out:
        io.write_metrics(report, args.out)
    return 0


def cmd_ablate(args) -> int:
    doc, cfg = _load(args)
    if not len(doc.selector):
        raise DomainError("the scene document selects no parameters (optimize.parameters is empty)")
    targets = _targets(args.target)
    truth = ParameterVector(_params(args.params_gt), doc.selector) if args.params_gt else None
    table = run_ablation(doc.initial_scene(), doc.selector, targets, cfg.optimize, truth, cfg.workers)
    print(format_metrics_table(table))
    if args.out:
        io.write_metrics({k: v.to_dict() for k, v in table.items()}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffrender", description="Physically based differentiable renderer.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--scene", required=True, help="scene document (JSON)")
        p.add_argument("--config", required=config_required, help="run configuration document (JSON)")

    p = sub.add_parser("render", help="render a scene to PFM")
    common(p)
    p.add_argument("--out", required=True, help="output PFM path")
    p.add_argument("--png", help="optional 8-bit preview PNG path")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("optimize", help="fit the selected parameters to target images")
    common(p)
    p.add_argument("--target", action="append", required=True, help="target PFM (repeatable)")
    p.add_argument("--out-scene", required=True, help="where to write the optimised scene document")
    p.add_argument("--history", help="line-delimited run history output")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("gradcheck", help="compare adjoint gradients with finite differences")
    common(p)
    p.add_argument("--h", type=float, help="finite-difference step (default: per-parameter)")
    p.add_argument("--target", action="append", help="target PFM (default: see documentation)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("metrics", help="RE and optionally MPEA, GN and CS")
    p.add_argument("--gt", required=True, help="ground-truth PFM")
    p.add_argument("--render", required=True, help="rendered PFM")
    p.add_argument("--params-gt", help="true parameters (JSON array or scene document)")
    p.add_argument("--params-est", help="estimated parameters (JSON array or scene document)")
    p.add_argument("--history", help="run history for GN and CS")
    p.add_argument("--out", help="write the metrics as JSON")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("ablate", help="full method vs no smoothing vs no regularisation")
    common(p)
    p.add_argument("--target", action="append", required=True, help="target PFM (repeatable)")
    p.add_argument("--params-gt", help="true parameters for MPEA (JSON array or scene document)")
    p.add_argument("--out", help="write the table as JSON")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


cli = main
