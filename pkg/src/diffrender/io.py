"""Scene and run-config documents, PFM/PNG images and run-history files."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import IO, List, Optional, Tuple

import numpy as np

from .optim import IterationRecord, OptimizeConfig, RunHistory
from .params import (
    SHININESS,
    TARGETS,
    VERTEX,
    ParameterSelector,
    ParameterVector,
    ProjectionEvent,
    apply,
)
from .render import Image, RenderConfig
from .scene import Camera, DirectionalLight, Material, PointLight, Scene, SceneError, TriangleMesh

SCHEMA_VERSION = 1


class DocumentError(SceneError):
    """A scene or config document is malformed; the message names the key path."""


# -- structural helpers ----------------------------------------------------


def _expect_keys(obj, path: str, required=(), optional=()):
    if not isinstance(obj, dict):
        raise DocumentError(f"{path}: expected an object")
    for key in required:
        if key not in obj:
            raise DocumentError(f"{path}.{key}: required field is missing")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise DocumentError(f"{path}.{key}: unknown field")


def _number(value, path: str, lo=None, hi=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DocumentError(f"{path}: expected a number")
    if integer and not isinstance(value, int):
        raise DocumentError(f"{path}: expected an integer")
    if not math.isfinite(value):
        raise DocumentError(f"{path}: must be finite")
    if lo is not None and value < lo:
        raise DocumentError(f"{path}: must be >= {lo}")
    if hi is not None and value > hi:
        raise DocumentError(f"{path}: must be <= {hi}")
    return value


def _array(value, path: str, shape_tail, dtype=float):
    try:
        arr = np.array(value, dtype=dtype)
    except (TypeError, ValueError):
        raise DocumentError(f"{path}: expected a numeric array") from None
    if arr.size == 0:
        return arr.reshape((0,) + shape_tail)
    if arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail:
        raise DocumentError(f"{path}: expected shape {('...',) + shape_tail}, got {arr.shape}")
    return arr


def _vector(value, path: str):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)] * 3
    if not isinstance(value, list) or len(value) != 3:
        raise DocumentError(f"{path}: expected a number or a list of 3 numbers")
    return [float(_number(v, f"{path}[{i}]")) for i, v in enumerate(value)]


def _build(path: str, ctor, *args):
    try:
        return ctor(*args)
    except SceneError as exc:
        raise DocumentError(f"{path}: {exc}") from None


# -- scene documents -------------------------------------------------------


@dataclass
class SceneDocument:
    """A parsed scene document: the scene, the optimisation selector and initial overrides."""

    scene: Scene
    selector: ParameterSelector = field(default_factory=ParameterSelector)
    overrides: List[Tuple[tuple, float]] = field(default_factory=list)

    def initial_scene(self) -> Scene:
        """The scene with the optimize block's initial values written in."""
        if not self.overrides:
            return self.scene
        sel = ParameterSelector([e for e, _ in self.overrides])
        events: List[ProjectionEvent] = []
        result = apply(self.scene, ParameterVector([v for _, v in self.overrides], sel), events)
        if events:
            ev = events[0]
            raise DocumentError(
                f"optimize.initial: {ev.parameter} = {ev.requested} violates its valid range"
                f" (nearest valid value {ev.stored})"
            )
        return result


def _parse_camera(doc) -> Camera:
    path = "camera"
    _expect_keys(doc, path, ("position", "look_at"), ("up", "vertical_fov", "width", "height"))
    kwargs = dict(position=_vector(doc["position"], f"{path}.position"),
                  look_at=_vector(doc["look_at"], f"{path}.look_at"))
    if "up" in doc:
        kwargs["up"] = _vector(doc["up"], f"{path}.up")
    if "vertical_fov" in doc:
        kwargs["vertical_fov"] = _number(doc["vertical_fov"], f"{path}.vertical_fov")
    for key in ("width", "height"):
        if key in doc:
            kwargs[key] = _number(doc[key], f"{path}.{key}", lo=1, integer=True)
    return _build(path, lambda: Camera(**kwargs))


def _parse_material(doc, i) -> Material:
    path = f"materials[{i}]"
    _expect_keys(doc, path, ("rho_d",), ("rho_s", "shininess"))
    rho_d = _vector(doc["rho_d"], f"{path}.rho_d")
    rho_s = _vector(doc.get("rho_s", 0.0), f"{path}.rho_s")
    shin = _number(doc.get("shininess", 0.0), f"{path}.shininess", lo=0)
    return _build(path, Material, rho_d, rho_s, shin)


def _parse_light(doc, i):
    path = f"lights[{i}]"
    if not isinstance(doc, dict):
        raise DocumentError(f"{path}: expected an object")
    kind = doc.get("type")
    if kind == "point":
        _expect_keys(doc, path, ("type", "position", "intensity"))
        return _build(path, PointLight, _vector(doc["position"], f"{path}.position"),
                      _vector(doc["intensity"], f"{path}.intensity"))
    if kind == "directional":
        _expect_keys(doc, path, ("type", "direction", "irradiance"))
        return _build(path, DirectionalLight, _vector(doc["direction"], f"{path}.direction"),
                      _vector(doc["irradiance"], f"{path}.irradiance"))
    raise DocumentError(f"{path}.type: expected 'point' or 'directional', got {kind!r}")


def read_triangle_list(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read a raw triangle list: one triangle per line as nine numbers.

    Blank lines and lines starting with ``#`` are ignored. Returns unshared
    ``(vertices, indices)``.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 9:
                raise DocumentError(f"{path}:{lineno}: expected 9 numbers, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise DocumentError(f"{path}:{lineno}: not a number") from None
    verts = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return verts, np.arange(len(verts), dtype=np.int64).reshape(-1, 3)


def write_triangle_list(mesh: TriangleMesh, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        for tri in mesh.vertices[mesh.indices]:
            fh.write(" ".join(repr(float(x)) for x in tri.reshape(-1)) + "\n")


def _parse_mesh(doc, i, base_dir) -> TriangleMesh:
    path = f"meshes[{i}]"
    if not isinstance(doc, dict):
        raise DocumentError(f"{path}: expected an object")
    if "file" in doc:
        _expect_keys(doc, path, ("file",), ("material_id",))
        mesh_path = os.path.join(base_dir, doc["file"])
        if not os.path.isfile(mesh_path):
            raise DocumentError(f"{path}.file: mesh file not found: {mesh_path}")
        verts, idx = read_triangle_list(mesh_path)
        normals = None
    else:
        _expect_keys(doc, path, ("vertices", "indices"), ("material_id", "normals"))
        verts = _array(doc["vertices"], f"{path}.vertices", (3,))
        idx = _array(doc["indices"], f"{path}.indices", (3,), dtype=np.int64)
        normals = doc.get("normals")
        if normals is not None:
            normals = _array(normals, f"{path}.normals", (3,))
    mat = _number(doc.get("material_id", 0), f"{path}.material_id", lo=0, integer=True)
    return _build(path, TriangleMesh, verts, idx, mat, normals)


def _parse_entry(doc, path):
    _expect_keys(doc, path, ("target", "index"), ("component", "vertex", "value"))
    target = doc["target"]
    if target not in TARGETS:
        raise DocumentError(f"{path}.target: unknown target {target!r}; expected one of {list(TARGETS)}")
    index = _number(doc["index"], f"{path}.index", lo=0, integer=True)
    vertex = -1
    if target == VERTEX:
        if "vertex" not in doc:
            raise DocumentError(f"{path}.vertex: required for {VERTEX}")
        vertex = _number(doc["vertex"], f"{path}.vertex", lo=0, integer=True)
    elif "vertex" in doc:
        raise DocumentError(f"{path}.vertex: only valid for {VERTEX}")
    if "component" in doc:
        components = [_number(doc["component"], f"{path}.component", lo=0, hi=2, integer=True)]
        if target == SHININESS and components != [0]:
            raise DocumentError(f"{path}.component: shininess is a scalar")
    else:
        components = [0] if target == SHININESS else [0, 1, 2]
    return [(target, index, c, vertex) for c in components]


def _parse_optimize(doc, scene):
    path = "optimize"
    _expect_keys(doc, path, (), ("parameters", "initial"))
    entries = []
    for i, e in enumerate(doc.get("parameters", [])):
        p = f"{path}.parameters[{i}]"
        if isinstance(e, dict) and "value" in e:
            raise DocumentError(f"{p}.value: unknown field")
        entries += _parse_entry(e, p)
    try:
        selector = ParameterSelector(entries)
        selector.validate(scene)
    except SceneError as exc:
        raise DocumentError(f"{path}.parameters: {exc}") from None
    overrides = []
    for i, e in enumerate(doc.get("initial", [])):
        p = f"{path}.initial[{i}]"
        if not isinstance(e, dict) or "value" not in e:
            raise DocumentError(f"{p}.value: required field is missing")
        value = e["value"]
        parsed = _parse_entry(e, p)
        values = _vector(value, f"{p}.value") if len(parsed) == 3 else [_number(value, f"{p}.value")]
        if len(values) != len(parsed):
            raise DocumentError(f"{p}.value: a single component takes a scalar")
        for entry, v in zip(parsed, values):
            try:
                ParameterSelector([entry]).validate(scene)
            except SceneError as exc:
                raise DocumentError(f"{p}: {exc}") from None
            overrides.append((entry, float(v)))
    return selector, overrides


def parse_scene_document(doc: dict, base_dir: str = ".") -> SceneDocument:
    _expect_keys(doc, "$", ("schema_version", "camera", "materials", "lights", "meshes"), ("optimize",))
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise DocumentError(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    for key in ("materials", "lights", "meshes"):
        if not isinstance(doc[key], list):
            raise DocumentError(f"{key}: expected a list")
    camera = _parse_camera(doc["camera"])
    materials = [_parse_material(m, i) for i, m in enumerate(doc["materials"])]
    lights = [_parse_light(l, i) for i, l in enumerate(doc["lights"])]
    meshes = [_parse_mesh(m, i, base_dir) for i, m in enumerate(doc["meshes"])]
    scene = _build("meshes", Scene, meshes, materials, lights, camera)
    selector, overrides = _parse_optimize(doc.get("optimize", {}), scene)
    return SceneDocument(scene, selector, overrides)


def _read_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: not valid JSON ({exc})") from None


def load_scene_document(path: str) -> SceneDocument:
    return parse_scene_document(_read_json(path), os.path.dirname(os.path.abspath(path)))


def load_scene(path: str) -> Tuple[Scene, ParameterSelector]:
    """Load and validate a scene document; returns the scene and its parameter selector."""
    doc = load_scene_document(path)
    return doc.scene, doc.selector


def _floats(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def scene_to_document(scene: Scene, selector: Optional[ParameterSelector] = None,
                      overrides=None) -> dict:
    cam = scene.camera
    lights = []
    for light in scene.lights:
        if isinstance(light, PointLight):
            lights.append({"type": "point", "position": _floats(light.position),
                           "intensity": _floats(light.intensity)})
        else:
            lights.append({"type": "directional", "direction": _floats(light.direction),
                           "irradiance": _floats(light.irradiance)})
    meshes = []
    for mesh in scene.meshes:
        m = {"vertices": _floats(mesh.vertices), "indices": mesh.indices.tolist(),
             "material_id": mesh.material_id}
        if mesh.normals is not None:
            m["normals"] = _floats(mesh.normals)
        meshes.append(m)

    def entry(e):
        d = {"target": e.target, "index": e.obj, "component": e.component}
        if e.target == VERTEX:
            d["vertex"] = e.vertex
        return d

    doc = {
        "schema_version": SCHEMA_VERSION,
        "camera": {"position": _floats(cam.position), "look_at": _floats(cam.look_at),
                   "up": _floats(cam.up), "vertical_fov": float(cam.vertical_fov),
                   "width": cam.width, "height": cam.height},
        "materials": [{"rho_d": _floats(m.rho_d), "rho_s": _floats(m.rho_s), "shininess": m.shininess}
                      for m in scene.materials],
        "lights": lights,
        "meshes": meshes,
    }
    if selector is not None and len(selector) or overrides:
        doc["optimize"] = {
            "parameters": [entry(e) for e in (selector or [])],
            "initial": [dict(entry(e), value=v) for e, v in (overrides or [])],
        }
    return doc


def save_scene(scene: Scene, path: str, selector: Optional[ParameterSelector] = None, overrides=None):
    """Write ``scene`` as a document with inline meshes; reloading gives an equal scene."""
    from .params import ParamEntry

    overrides = [(ParamEntry(*e), v) for e, v in (overrides or [])]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_document(scene, selector, overrides), fh, indent=1)
        fh.write("\n")


# -- run configuration -----------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    render: RenderConfig = field(default_factory=RenderConfig)
    optimize: OptimizeConfig = field(default_factory=OptimizeConfig)
    resolution: Optional[Tuple[int, int]] = None
    workers: int = 1
    gradcheck_threshold: float = 1e-2
    gradcheck_vertex_threshold: float = 5e-2

    def apply_resolution(self, scene: Scene) -> Scene:
        if self.resolution is None:
            return scene
        w, h = self.resolution
        return scene.replace(camera=replace(scene.camera, width=w, height=h))


_OPT_FIELDS = {f.name: f for f in fields(OptimizeConfig) if f.name != "render"}


def parse_config_document(doc: dict) -> RunConfig:
    _expect_keys(doc, "$", ("schema_version",), ("render", "optimize", "workers", "gradcheck"))
    if doc["schema_version"] != SCHEMA_VERSION:
        raise DocumentError(f"schema_version: unsupported version {doc['schema_version']!r}")
    r = doc.get("render", {})
    _expect_keys(r, "render", (), ("spp", "max_depth", "seed", "stratified", "resolution"))
    render_kwargs = {}
    for key, lo in (("spp", 1), ("max_depth", 1), ("seed", 0)):
        if key in r:
            render_kwargs[key] = _number(r[key], f"render.{key}", lo=lo, integer=True)
    if "stratified" in r:
        if not isinstance(r["stratified"], bool):
            raise DocumentError("render.stratified: expected true or false")
        render_kwargs["stratified"] = r["stratified"]
    resolution = None
    if "resolution" in r:
        res = r["resolution"]
        if not isinstance(res, list) or len(res) != 2:
            raise DocumentError("render.resolution: expected [width, height]")
        resolution = tuple(_number(v, f"render.resolution[{i}]", lo=1, integer=True) for i, v in enumerate(res))
    render_cfg = RenderConfig(**render_kwargs)

    o = doc.get("optimize", {})
    _expect_keys(o, "optimize", (), tuple(_OPT_FIELDS))
    opt_kwargs = {}
    for key, value in o.items():
        kind = _OPT_FIELDS[key].type
        p = f"optimize.{key}"
        if kind in (bool, "bool"):
            if not isinstance(value, bool):
                raise DocumentError(f"{p}: expected true or false")
            opt_kwargs[key] = value
        elif kind in (int, "int"):
            opt_kwargs[key] = _number(value, p, lo=1, integer=True)
        else:
            opt_kwargs[key] = float(_number(value, p))
    try:
        opt_cfg = OptimizeConfig(render=render_cfg, **opt_kwargs)
    except ValueError as exc:
        raise DocumentError(f"optimize: {exc}") from None

    g = doc.get("gradcheck", {})
    _expect_keys(g, "gradcheck", (), ("threshold", "vertex_threshold"))
    workers = _number(doc.get("workers", 1), "workers", lo=1, integer=True)
    return RunConfig(
        render=render_cfg,
        optimize=opt_cfg,
        resolution=resolution,
        workers=workers,
        gradcheck_threshold=float(_number(g.get("threshold", 1e-2), "gradcheck.threshold", lo=0)),
        gradcheck_vertex_threshold=float(
            _number(g.get("vertex_threshold", 5e-2), "gradcheck.vertex_threshold", lo=0)
        ),
    )


def load_config(path: str) -> RunConfig:
    return parse_config_document(_read_json(path))


# -- images ----------------------------------------------------------------


class PFMError(ValueError):
    pass


def write_image_pfm(image: Image, path: str):
    """Little-endian RGB PFM (scale -1.0), rows stored bottom to top."""
    header = f"PF\n{image.width} {image.height}\n-1.0\n".encode("ascii")
    data = np.ascontiguousarray(image.pixels[::-1], dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def _read_token(fh: IO[bytes], path: str) -> bytes:
    token = b""
    while True:
        c = fh.read(1)
        if not c:
            if token:
                return token
            raise PFMError(f"{path}: truncated header")
        if c.isspace():
            if token:
                return token
            continue
        token += c
        if len(token) > 32:
            raise PFMError(f"{path}: malformed header")


def read_image_pfm(path: str) -> Image:
    with open(path, "rb") as fh:
        magic = _read_token(fh, path)
        if magic == b"Pf":
            raise PFMError(f"{path}: greyscale PFM is not supported (expected 'PF')")
        if magic != b"PF":
            raise PFMError(f"{path}: not a PFM file (bad magic {magic[:8]!r})")
        try:
            width = int(_read_token(fh, path))
            height = int(_read_token(fh, path))
            scale = float(_read_token(fh, path))
        except ValueError:
            raise PFMError(f"{path}: malformed header") from None
        if width < 1 or height < 1:
            raise PFMError(f"{path}: invalid dimensions {width}x{height}")
        if scale > 0:
            raise PFMError(f"{path}: big-endian PFM (positive scale) is not supported")
        if scale == 0 or not math.isfinite(scale):
            raise PFMError(f"{path}: invalid scale {scale}")
        payload = fh.read()
    expected = width * height * 3 * 4
    if len(payload) < expected:
        raise PFMError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise PFMError(f"{path}: {len(payload) - expected} unexpected trailing bytes")
    pixels = np.frombuffer(payload, dtype="<f4").reshape(height, width, 3)[::-1]
    try:
        return Image(pixels.astype(np.float32))
    except ValueError as exc:
        raise PFMError(f"{path}: {exc}") from None


def to_srgb8(image: Image) -> np.ndarray:
    """Clamp to [0, 1], apply gamma 1/2.2 and round half up to 8 bits."""
    x = np.clip(image.pixels.astype(np.float64), 0.0, 1.0) ** (1.0 / 2.2)
    return np.floor(255.0 * x + 0.5).astype(np.uint8)


def write_image_png(image: Image, path: str):
    """8-bit preview only; metrics always read PFM."""
    from PIL import Image as PILImage

    PILImage.fromarray(to_srgb8(image), mode="RGB").save(path, format="PNG")


# -- run history -----------------------------------------------------------


def history_record(record: IterationRecord, labels=None, timing: bool = False) -> dict:
    """One history line. Wall time is left out unless ``timing`` so files are reproducible."""
    d = {
        "t": record.t,
        "loss": record.loss,
        "best_loss": record.best_loss,
        "raw_grad_norm": record.raw_norm,
        "smoothed_grad_norm": record.smoothed_norm,
        "gn": record.gn,
        "theta": record.theta.tolist(),
        "raw_grad": record.raw_grad.tolist(),
        "smoothed_grad": record.smoothed_grad.tolist(),
    }
    if labels is not None:
        d["parameters"] = list(labels)
    if timing:
        d["wall_time"] = record.wall_time
    return d


class HistoryWriter:
    """Appends one JSON line per iteration and flushes, so partial runs stay readable."""

    def __init__(self, path: str, labels=None, timing: bool = False):
        self._fh = open(path, "w", encoding="utf-8")
        self.labels = labels
        self.timing = timing

    def __call__(self, record: IterationRecord):
        self._fh.write(json.dumps(history_record(record, self.labels, self.timing)) + "\n")
        self._fh.flush()

    def finish(self, history: RunHistory):
        self._fh.write(json.dumps({"converged_at": history.converged_at, "iterations": len(history)}) + "\n")
        self.close()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_history(history: RunHistory, path: str, labels=None, timing: bool = False):
    with HistoryWriter(path, labels, timing) as w:
        for r in history.records:
            w(r)
        w.finish(history)


def read_history(path: str) -> RunHistory:
    """Parse a history file; a trailing partial line from an interrupted run is ignored."""
    history = RunHistory()
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError:
            if lineno >= len(lines) - 1:
                break
            raise DocumentError(f"{path}:{lineno}: malformed history record") from None
        if "t" not in d:
            history.converged_at = d.get("converged_at")
            continue
        history.append(IterationRecord(
            t=d["t"], loss=d["loss"], theta=np.array(d["theta"]),
            raw_grad=np.array(d["raw_grad"]), smoothed_grad=np.array(d["smoothed_grad"]),
            raw_norm=d["raw_grad_norm"], smoothed_norm=d["smoothed_grad_norm"], gn=d["gn"],
            wall_time=d.get("wall_time", float("nan")), best_loss=d["best_loss"],
        ))
    return history


def write_metrics(report: dict, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
