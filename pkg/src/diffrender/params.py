"""Flat, ordered view of the optimisable scalars of a scene."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional

import numpy as np

from .scene import DirectionalLight, Material, PointLight, Scene, SceneError

logger = logging.getLogger(__name__)

RHO_D = "material.rho_d"
RHO_S = "material.rho_s"
SHININESS = "material.shininess"
INTENSITY = "light.intensity"
VERTEX = "vertex.position"

TARGETS = (RHO_D, RHO_S, SHININESS, INTENSITY, VERTEX)
MATERIAL_TARGETS = frozenset({RHO_D, RHO_S, SHININESS})
MAX_SHININESS = 1e4


class ParamEntry(NamedTuple):
    """One scalar: ``target`` kind, object index, component, and vertex index for geometry.

    ``obj`` is a material, light or mesh index depending on ``target``.
    """

    target: str
    obj: int
    component: int = 0
    vertex: int = -1

    @property
    def label(self) -> str:
        if self.target == VERTEX:
            return f"{self.target}[{self.obj}][{self.vertex}].{'xyz'[self.component]}"
        if self.target == SHININESS:
            return f"{self.target}[{self.obj}]"
        return f"{self.target}[{self.obj}].{'rgb'[self.component]}"

    @property
    def is_material(self) -> bool:
        return self.target in MATERIAL_TARGETS


class SelectorError(SceneError):
    pass


class ParameterSelector:
    def __init__(self, entries: Iterable = ()):
        self.entries = tuple(ParamEntry(*e) for e in entries)
        if len(set(self.entries)) != len(self.entries):
            raise SelectorError("parameter selector contains duplicate entries")
        for e in self.entries:
            if e.target not in TARGETS:
                raise SelectorError(f"unknown parameter target {e.target!r}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        return isinstance(other, ParameterSelector) and self.entries == other.entries

    def __repr__(self):
        return f"ParameterSelector({list(self.entries)!r})"

    @classmethod
    def material(cls, material: int, *targets: str) -> "ParameterSelector":
        targets = targets or (RHO_D,)
        entries = []
        for t in targets:
            entries += [(t, material, 0)] if t == SHININESS else [(t, material, c) for c in range(3)]
        return cls(entries)

    @classmethod
    def light(cls, light: int) -> "ParameterSelector":
        return cls([(INTENSITY, light, c) for c in range(3)])

    @classmethod
    def vertices(cls, mesh: int, vertices: Iterable[int], components=(0, 1, 2)) -> "ParameterSelector":
        return cls([(VERTEX, mesh, c, v) for v in vertices for c in components])

    def __add__(self, other: "ParameterSelector") -> "ParameterSelector":
        return ParameterSelector(self.entries + other.entries)

    @property
    def material_mask(self) -> np.ndarray:
        return np.array([e.is_material for e in self.entries], dtype=bool)

    def validate(self, scene: Scene):
        for e in self.entries:
            _read(scene, e)

    def gather(self, grads, accel) -> np.ndarray:
        """Pick this selector's components out of full-scene gradient buffers."""
        out = np.zeros(len(self.entries))
        for i, e in enumerate(self.entries):
            if e.target == RHO_D:
                out[i] = grads.rho_d[e.obj, e.component]
            elif e.target == RHO_S:
                out[i] = grads.rho_s[e.obj, e.component]
            elif e.target == SHININESS:
                out[i] = grads.shininess[e.obj]
            elif e.target == INTENSITY:
                out[i] = grads.light[e.obj, e.component]
            else:
                out[i] = grads.vertices[accel.vertex_offset[e.obj] + e.vertex, e.component]
        return out


def _read(scene: Scene, e: ParamEntry) -> float:
    try:
        if e.target == VERTEX:
            if e.vertex < 0 or e.obj < 0:
                raise IndexError
            return float(scene.meshes[e.obj].vertices[e.vertex, e.component])
        if e.obj < 0 or not 0 <= e.component < 3:
            raise IndexError
        if e.target == INTENSITY:
            return float(scene.lights[e.obj].intensity[e.component])
        m = scene.materials[e.obj]
        if e.target == SHININESS:
            return m.shininess
        return float((m.rho_d if e.target == RHO_D else m.rho_s)[e.component])
    except IndexError:
        raise SelectorError(f"parameter {e.label} does not resolve in the scene") from None


@dataclass(frozen=True, eq=False)
class ParameterVector:
    values: np.ndarray
    selector: ParameterSelector

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if len(vals) != len(self.selector):
            raise ValueError(f"{len(vals)} values for a selector of length {len(self.selector)}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(values, self.selector)


class ProjectionEvent(NamedTuple):
    parameter: str
    requested: float
    stored: float


def flatten(scene: Scene, selector: ParameterSelector) -> ParameterVector:
    return ParameterVector([_read(scene, e) for e in selector], selector)


def _project_material(rho_d, rho_s, shininess):
    rho_d = np.clip(rho_d, 0.0, 1.0)
    rho_s = np.clip(rho_s, 0.0, 1.0)
    total = rho_d + rho_s
    over = total > 1.0
    safe = np.where(over, total, 1.0)
    rho_d = np.where(over, rho_d / safe, rho_d)
    rho_s = np.where(over, rho_s / safe, rho_s)
    # rounding of the rescale can leave the sum a hair above 1
    rho_s = np.where(over, np.minimum(rho_s, 1.0 - rho_d), rho_s)
    return rho_d, rho_s, float(np.clip(shininess, 0.0, MAX_SHININESS))


def apply(scene: Scene, theta: ParameterVector, events: Optional[List[ProjectionEvent]] = None) -> Scene:
    """Write ``theta`` back into a copy of ``scene``, projecting onto valid ranges.

    Reflectances are clamped to [0, 1] and rescaled jointly where ``rho_d + rho_s``
    exceeds 1; shininess is clamped to [0, 1e4]; light intensities to >= 0. Every
    value changed by the projection is appended to ``events`` when given.
    """
    selector = theta.selector
    if len(theta.values) != len(selector):
        raise ValueError("parameter vector length does not match its selector")
    mats = {i: [m.rho_d.copy(), m.rho_s.copy(), m.shininess] for i, m in enumerate(scene.materials)}
    lights = {i: l.intensity.copy() for i, l in enumerate(scene.lights)}
    verts = {}
    touched_m, touched_l = set(), set()
    for e, value in zip(selector, theta.values):
        _read(scene, e)
        if e.target == RHO_D:
            mats[e.obj][0][e.component] = value
            touched_m.add(e.obj)
        elif e.target == RHO_S:
            mats[e.obj][1][e.component] = value
            touched_m.add(e.obj)
        elif e.target == SHININESS:
            mats[e.obj][2] = value
            touched_m.add(e.obj)
        elif e.target == INTENSITY:
            lights[e.obj][e.component] = value
            touched_l.add(e.obj)
        else:
            if e.obj not in verts:
                verts[e.obj] = scene.meshes[e.obj].vertices.copy()
            verts[e.obj][e.vertex, e.component] = value

    materials = list(scene.materials)
    for i in sorted(touched_m):
        rho_d, rho_s, shin = _project_material(*mats[i])
        materials[i] = Material(rho_d, rho_s, shin)
    new_lights = list(scene.lights)
    for i in sorted(touched_l):
        inten = np.maximum(lights[i], 0.0)
        old = scene.lights[i]
        new_lights[i] = (
            PointLight(old.position, inten)
            if isinstance(old, PointLight)
            else DirectionalLight(old.direction, inten)
        )
    meshes = list(scene.meshes)
    for i, v in verts.items():
        meshes[i] = meshes[i].replace_vertices(v)
    result = scene.replace(meshes=meshes, materials=materials, lights=new_lights)

    if events is not None or logger.isEnabledFor(logging.DEBUG):
        stored = flatten(result, selector).values
        for e, want, got in zip(selector, theta.values, stored):
            if want != got:
                ev = ProjectionEvent(e.label, float(want), float(got))
                logger.debug("projected %s: %r -> %r", *ev)
                if events is not None:
                    events.append(ev)
    return result
