"""Scene description: spectra, camera, triangle meshes, Phong materials and delta lights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

RAY_EPSILON = 1e-4
DEGENERATE_AREA = 1e-12


class SceneError(ValueError):
    """Raised when a scene violates one of its invariants."""


class DegenerateGeometryError(SceneError):
    pass


def spectrum(value, name: str = "spectrum", nonnegative: bool = True) -> np.ndarray:
    """Coerce ``value`` (scalar or 3-sequence) to a float64 RGB array and validate it."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(3, float(arr))
    if arr.shape != (3,):
        raise SceneError(f"{name}: expected 3 channels, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SceneError(f"{name}: channels must be finite")
    if nonnegative and np.any(arr < 0):
        raise SceneError(f"{name}: channels must be >= 0")
    arr.setflags(write=False)
    return arr


def _vec3(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise SceneError(f"{name}: expected a finite 3-vector")
    arr.setflags(write=False)
    return arr


def normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _array_eq(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin, "ray.origin"))
        d = _vec3(self.direction, "ray.direction")
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise SceneError("ray.direction must be unit length")
        object.__setattr__(self, "direction", d)
        if not self.t_min < self.t_max:
            raise SceneError("ray requires t_min < t_max")


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera. Pixel (0, 0) is the top-left corner of the image."""

    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    vertical_fov: float = 45.0
    width: int = 64
    height: int = 64

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "camera.position"))
        object.__setattr__(self, "look_at", _vec3(self.look_at, "camera.look_at"))
        up = _vec3(self.up, "camera.up")
        if np.linalg.norm(up) == 0:
            raise SceneError("camera.up must be non-zero")
        object.__setattr__(self, "up", up)
        if int(self.width) < 1 or int(self.height) < 1:
            raise SceneError("camera width and height must be >= 1")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if not 0.0 < float(self.vertical_fov) < 180.0:
            raise SceneError("camera.vertical_fov must lie in (0, 180)")
        if np.array_equal(self.position, self.look_at):
            raise SceneError("camera.look_at must differ from camera.position")
        forward = normalize(self.look_at - self.position)
        if np.linalg.norm(np.cross(forward, normalize(self.up))) < 1e-9:
            raise SceneError("camera.up must not be parallel to the viewing direction")

    def basis(self):
        """Return ``(forward, right, true_up)`` as unit vectors."""
        forward = normalize(self.look_at - self.position)
        right = normalize(np.cross(forward, self.up))
        true_up = np.cross(right, forward)
        return forward, right, true_up

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return (
            np.array_equal(self.position, other.position)
            and np.array_equal(self.look_at, other.look_at)
            and np.array_equal(self.up, other.up)
            and self.vertical_fov == other.vertical_fov
            and (self.width, self.height) == (other.width, other.height)
        )


@dataclass(frozen=True, eq=False)
class Material:
    """Phong material: diffuse albedo, specular reflectance and shininess exponent."""

    rho_d: np.ndarray
    rho_s: np.ndarray = field(default_factory=lambda: np.zeros(3))
    shininess: float = 0.0

    def __post_init__(self):
        rho_d = spectrum(self.rho_d, "rho_d")
        rho_s = spectrum(self.rho_s, "rho_s")
        if np.any(rho_d > 1) or np.any(rho_s > 1):
            raise SceneError("material reflectances must lie in [0, 1]")
        if np.any(rho_d + rho_s > 1.0 + 1e-9):
            raise SceneError(
                f"material violates energy conservation: rho_d + rho_s = {(rho_d + rho_s).tolist()} > 1"
            )
        shin = float(self.shininess)
        if not math.isfinite(shin) or shin < 0:
            raise SceneError("material.shininess must be finite and >= 0")
        object.__setattr__(self, "rho_d", rho_d)
        object.__setattr__(self, "rho_s", rho_s)
        object.__setattr__(self, "shininess", shin)

    def __eq__(self, other):
        if not isinstance(other, Material):
            return NotImplemented
        return (
            np.array_equal(self.rho_d, other.rho_d)
            and np.array_equal(self.rho_s, other.rho_s)
            and self.shininess == other.shininess
        )


@dataclass(frozen=True, eq=False)
class PointLight:
    """Isotropic point source; ``intensity`` is radiant intensity per steradian."""

    position: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "light.position"))
        object.__setattr__(self, "intensity", spectrum(self.intensity, "light.intensity"))

    def __eq__(self, other):
        if not isinstance(other, PointLight):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(
            self.intensity, other.intensity
        )


@dataclass(frozen=True, eq=False)
class DirectionalLight:
    """Distant source. ``direction`` is the direction the light travels in."""

    direction: np.ndarray
    irradiance: np.ndarray

    def __post_init__(self):
        d = _vec3(self.direction, "light.direction")
        if np.linalg.norm(d) == 0:
            raise SceneError("light.direction must be non-zero")
        object.__setattr__(self, "direction", normalize(d))
        object.__setattr__(self, "irradiance", spectrum(self.irradiance, "light.irradiance"))

    # Shared name with PointLight so optimizers can address either variant.
    @property
    def intensity(self) -> np.ndarray:
        return self.irradiance

    def __eq__(self, other):
        if not isinstance(other, DirectionalLight):
            return NotImplemented
        return np.array_equal(self.direction, other.direction) and np.array_equal(
            self.irradiance, other.irradiance
        )


Light = Union[PointLight, DirectionalLight]


def triangle_areas(vertices: np.ndarray, indices: np.ndarray) -> np.ndarray:
    v0, v1, v2 = (vertices[indices[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=-1)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    indices: np.ndarray
    material_id: int = 0
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        idx = np.array(self.indices, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(verts)):
            raise SceneError("mesh vertices must be finite")
        if idx.size and (idx.min() < 0 or idx.max() >= len(verts)):
            raise SceneError("mesh index out of range")
        verts.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "material_id", int(self.material_id))
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
            if nrm.shape != verts.shape:
                raise SceneError("per-vertex normals must match the vertex count")
            lengths = np.linalg.norm(nrm, axis=-1)
            if not np.all(lengths > 0):
                raise SceneError("per-vertex normals must be non-zero")
            # leave already-unit rows untouched so save/load round-trips are exact
            off = np.abs(lengths - 1.0) > 1e-12
            nrm[off] /= lengths[off, None]
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return len(self.indices)

    def replace_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(vertices, self.indices, self.material_id, self.normals)

    def __eq__(self, other):
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.indices, other.indices)
            and self.material_id == other.material_id
            and _array_eq(self.normals, other.normals)
        )


@dataclass(frozen=True, eq=False)
class Scene:
    meshes: tuple
    materials: tuple
    lights: tuple
    camera: Camera

    def __post_init__(self):
        object.__setattr__(self, "meshes", tuple(self.meshes))
        object.__setattr__(self, "materials", tuple(self.materials))
        object.__setattr__(self, "lights", tuple(self.lights))
        for i, mesh in enumerate(self.meshes):
            if not 0 <= mesh.material_id < len(self.materials):
                raise SceneError(f"meshes[{i}].material_id {mesh.material_id} is not a valid material")

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.meshes == other.meshes
            and self.materials == other.materials
            and self.lights == other.lights
            and self.camera == other.camera
        )

    @property
    def triangle_count(self) -> int:
        return sum(len(m) for m in self.meshes)

    def replace(self, **changes) -> "Scene":
        fields = dict(meshes=self.meshes, materials=self.materials, lights=self.lights, camera=self.camera)
        fields.update(changes)
        return Scene(**fields)


class HitRecord(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    t: float
    mesh_id: int
    triangle_id: int
    barycentrics: tuple


class LightSample(NamedTuple):
    direction: np.ndarray
    distance: float
    weight: np.ndarray


def generate_rays(camera: Camera, px, py, u, v):
    """Vectorised primary ray generation; returns ``(origins, directions)``."""
    forward, right, true_up = camera.basis()
    tan_half = math.tan(math.radians(camera.vertical_fov) / 2.0)
    aspect = camera.width / camera.height
    sx = (2.0 * (np.asarray(px, dtype=np.float64) + u) / camera.width - 1.0) * tan_half * aspect
    sy = (1.0 - 2.0 * (np.asarray(py, dtype=np.float64) + v) / camera.height) * tan_half
    d = forward[None, :] + sx[..., None] * right[None, :] + sy[..., None] * true_up[None, :]
    d = normalize(d)
    o = np.broadcast_to(camera.position, d.shape).copy()
    return o, d


def generate_ray(camera: Camera, px: int, py: int, jitter=(0.5, 0.5)) -> Ray:
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise IndexError(f"pixel ({px}, {py}) outside {camera.width}x{camera.height} image")
    u, v = jitter
    _, d = generate_rays(camera, np.array([px]), np.array([py]), np.array([u]), np.array([v]))
    return Ray(camera.position, d[0])


def sample_light(light: Light, shading_point) -> LightSample:
    """Direction towards ``light``, its distance, and incident radiance weight.

    The weight excludes the cosine factor and visibility.
    """
    p = np.asarray(shading_point, dtype=np.float64)
    if isinstance(light, PointLight):
        to_light = light.position - p
        dist = float(np.linalg.norm(to_light))
        if dist < 1e-9:
            raise DegenerateGeometryError("shading point coincides with point light")
        return LightSample(to_light / dist, dist, light.intensity / (dist * dist))
    return LightSample(-light.direction, math.inf, light.irradiance.copy())
