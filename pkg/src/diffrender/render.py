"""Monte Carlo path tracing with next-event estimation, plus its detached adjoint.

The forward pass is a wavefront tracer: all samples of a pixel tile advance one
bounce at a time as numpy arrays. When gradients are requested the per-bounce state
is kept on a small tape and swept backwards once the tile's pixel values (and so the
loss adjoint) are known. Sampled directions, lobe choices, shadow-ray outcomes and
which triangle a ray hits are held fixed; everything else along the path is
differentiated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .accel import AccelStructure, build_accel, dot, light_arrays
from .brdf import INV_PI, cos_r_gradients, phong_terms, sample_phong
from .sampler import Sampler, uniform
from .scene import RAY_EPSILON, Ray, Scene, generate_rays

# rays traced together per tile; fixed so tiling never depends on worker count
RAY_BUDGET = 1 << 16
_DIM_STRATUM = 1 << 40
_DIM_PATH = 2


@dataclass(frozen=True)
class RenderConfig:
    spp: int = 16
    max_depth: int = 4
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if int(self.spp) < 1:
            raise ValueError("spp must be >= 1")
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be >= 1")
        object.__setattr__(self, "spp", int(self.spp))
        object.__setattr__(self, "max_depth", int(self.max_depth))
        object.__setattr__(self, "seed", int(self.seed))

    def with_seed(self, seed: int) -> "RenderConfig":
        return replace(self, seed=seed)


@dataclass(eq=False)
class Image:
    """Linear HDR RGB image stored as float32, row 0 at the top."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"image pixels must have shape (height, width, 3), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image pixels must be finite")
        self.pixels = px

    @classmethod
    def zeros(cls, width: int, height: int) -> "Image":
        return cls(np.zeros((height, width, 3), dtype=np.float32))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self):
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and self.pixels.tobytes() == other.pixels.tobytes()


@dataclass
class Diagnostics:
    """Counters for contributions discarded because they were not finite."""

    nonfinite_radiance: int = 0
    nonfinite_gradient: int = 0

    def merge(self, other: "Diagnostics"):
        self.nonfinite_radiance += other.nonfinite_radiance
        self.nonfinite_gradient += other.nonfinite_gradient


@dataclass
class GradientBuffers:
    """Loss derivatives for every differentiable scalar of a scene."""

    rho_d: np.ndarray
    rho_s: np.ndarray
    shininess: np.ndarray
    light: np.ndarray
    vertices: np.ndarray

    @classmethod
    def zeros(cls, accel: AccelStructure) -> "GradientBuffers":
        m = len(accel.materials_shininess)
        return cls(
            rho_d=np.zeros((m, 3)),
            rho_s=np.zeros((m, 3)),
            shininess=np.zeros(m),
            light=np.zeros((len(accel.scene.lights), 3)),
            vertices=np.zeros((len(accel.vertices), 3)),
        )

    def add(self, other: "GradientBuffers"):
        self.rho_d += other.rho_d
        self.rho_s += other.rho_s
        self.shininess += other.shininess
        self.light += other.light
        self.vertices += other.vertices


def _finite_rows(arr: np.ndarray, diag: Diagnostics, attr: str) -> np.ndarray:
    bad = ~np.all(np.isfinite(arr), axis=-1) if arr.ndim > 1 else ~np.isfinite(arr)
    if np.any(bad):
        setattr(diag, attr, getattr(diag, attr) + int(bad.sum()))
        arr = arr.copy()
        arr[bad] = 0.0
    return arr


# -- forward ---------------------------------------------------------------


@dataclass
class _LightRecord:
    index: int
    is_point: bool
    wl: np.ndarray
    dist: np.ndarray
    weight: np.ndarray
    cos: np.ndarray  # cosine with visibility and hemisphere masks applied
    terms: object


@dataclass
class _Bounce:
    ids: np.ndarray
    tri: np.ndarray
    x: np.ndarray
    d: np.ndarray
    normal: np.ndarray
    N: np.ndarray
    flip: np.ndarray
    wo: np.ndarray
    mat: np.ndarray
    beta: np.ndarray
    direct: np.ndarray
    lights: List[_LightRecord] = field(default_factory=list)
    wi: Optional[np.ndarray] = None
    pdf: Optional[np.ndarray] = None
    cos_i: Optional[np.ndarray] = None
    terms_i: object = None
    w: Optional[np.ndarray] = None


def _trace(accel: AccelStructure, origins, directions, pixel, sample, seed, max_depth, t_min,
           diag: Diagnostics, record: bool):
    """Trace one path per ray. Returns ``(radiance, tape)``."""
    n = len(origins)
    radiance = np.zeros((n, 3))
    tape: List[_Bounce] = []
    lights = light_arrays(accel.scene)
    ids = np.arange(n)
    o, d = origins, directions
    beta = np.ones((n, 3))
    tmin = t_min
    for depth in range(max_depth):
        if ids.size == 0:
            break
        hits = accel.closest_hits(o, d, tmin, np.inf)
        h = hits.hit
        ids, o, d, beta = ids[h], o[h], d[h], beta[h]
        if ids.size == 0:
            break
        t, tri = hits.t[h], hits.tri[h]
        x = o + t[:, None] * d
        normal, N, flip = accel.shading_frame(tri, hits.b1[h], hits.b2[h], d)
        wo = -d
        mat = accel.tri_material[tri]
        rd = accel.materials_rho_d[mat]
        rs = accel.materials_rho_s[mat]
        sh = accel.materials_shininess[mat]
        cos_o = dot(normal, wo)

        direct = np.zeros((len(ids), 3))
        light_recs = []
        for index, is_point, pos, intensity in lights:
            if is_point:
                to = pos - x
                with np.errstate(divide="ignore", invalid="ignore"):
                    dist = np.linalg.norm(to, axis=1)
                    wl = to / dist[:, None]
                    weight = intensity[None, :] / (dist * dist)[:, None]
                shadow_max = dist - RAY_EPSILON
            else:
                wl = np.broadcast_to(-pos, x.shape)
                dist = np.full(len(ids), np.inf)
                weight = np.broadcast_to(intensity, x.shape)
                shadow_max = dist
            cos_l = dot(normal, wl)
            lit = (cos_l > 0) & (cos_o > 0) & (shadow_max > RAY_EPSILON)
            if np.any(lit):
                blocked = accel.occluded(x[lit], wl[lit], shadow_max[lit])
                lit[np.nonzero(lit)[0][blocked]] = False
            cos = np.where(lit, cos_l, 0.0)
            terms = phong_terms(rd, rs, sh, wl, wo, normal)
            contrib = terms.value * weight * cos[:, None]
            direct += np.where(lit[:, None], contrib, 0.0)
            if record:
                light_recs.append(_LightRecord(index, is_point, wl, dist, weight, cos, terms))
        direct = _finite_rows(direct, diag, "nonfinite_radiance")
        radiance[ids] += beta * direct

        rec = _Bounce(ids, tri, x, d, normal, N, flip, wo, mat, beta, direct, light_recs)
        if depth + 1 < max_depth:
            dim = _DIM_PATH + 3 * depth
            u_lobe = uniform(seed, pixel[ids], sample[ids], dim)
            u1 = uniform(seed, pixel[ids], sample[ids], dim + 1)
            u2 = uniform(seed, pixel[ids], sample[ids], dim + 2)
            wi, pdf, _ = sample_phong(rd, rs, sh, wo, normal, u1, u2, u_lobe)
            terms_i = phong_terms(rd, rs, sh, wi, wo, normal)
            cos_i = dot(normal, wi)
            ok = (pdf > 0) & (cos_i > 0) & terms_i.valid
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(ok[:, None], terms_i.value * (cos_i / pdf)[:, None], 0.0)
            w = _finite_rows(w, diag, "nonfinite_radiance")
            rec.wi, rec.pdf, rec.cos_i, rec.terms_i, rec.w = wi, pdf, cos_i, terms_i, w
            new_beta = beta * w
            alive = np.any(new_beta > 0, axis=1)
            ids, o, d, beta = ids[alive], x[alive], wi[alive], new_beta[alive]
            tmin = RAY_EPSILON
        else:
            ids = ids[:0]
        if record:
            tape.append(rec)
    return radiance, tape


# -- adjoint ---------------------------------------------------------------


def _scatter_material(grads: GradientBuffers, mat, d_value, terms, rho_s, m_count):
    """Accumulate dLoss/d(material) given dLoss/d(BRDF value) per ray and channel."""
    valid = terms.valid.astype(np.float64)
    for c in range(3):
        grads.rho_d[:, c] += np.bincount(mat, d_value[:, c] * valid * INV_PI, minlength=m_count)
        grads.rho_s[:, c] += np.bincount(mat, d_value[:, c] * valid * terms.lobe, minlength=m_count)
    d_shin = (d_value * rho_s).sum(axis=1) * valid * terms.dlobe_dshininess
    grads.shininess += np.bincount(mat, d_shin, minlength=m_count)


def _backward(accel: AccelStructure, tape: List[_Bounce], adjoint: np.ndarray, diag: Diagnostics):
    """Reverse sweep over the tape. ``adjoint`` is dLoss/d(sample radiance), shape ``(n, 3)``."""
    grads = GradientBuffers.zeros(accel)
    n = len(adjoint)
    m_count = len(accel.materials_shininess)
    v_count = len(accel.vertices)
    suffix_next = np.zeros((n, 3))
    origin_adj = np.zeros((n, 3))
    for rec in reversed(tape):
        ids = rec.ids
        k = len(ids)
        rs = accel.materials_rho_s[rec.mat]
        g_direct = adjoint[ids] * rec.beta
        a_normal = np.zeros((k, 3))
        a_x = origin_adj[ids].copy()

        for lr in rec.lights:
            terms = lr.terms
            f = terms.value
            d_f = _finite_rows(g_direct * lr.weight * lr.cos[:, None], diag, "nonfinite_gradient")
            _scatter_material(grads, rec.mat, d_f, terms, rs, m_count)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv_d2 = 1.0 / (lr.dist * lr.dist) if lr.is_point else 1.0
                d_light = g_direct * f * (lr.cos * inv_d2)[:, None]
            grads.light[lr.index] += _finite_rows(d_light, diag, "nonfinite_gradient").sum(axis=0)

            a_cr = (d_f * rs).sum(axis=1) * terms.dlobe_dcos_r * terms.valid
            a_cos = (g_direct * f * lr.weight).sum(axis=1) * (lr.cos > 0)
            dcr_dn, dcr_dwl = cos_r_gradients(lr.wl, rec.wo, rec.normal)
            a_normal += a_cr[:, None] * dcr_dn + a_cos[:, None] * lr.wl
            if lr.is_point:
                a_wl = a_cr[:, None] * dcr_dwl + a_cos[:, None] * rec.normal
                a_weight = (g_direct * f * lr.cos[:, None] * lr.weight).sum(axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    # W = I / |p - x|^2 and wl = (p - x) / |p - x|
                    a_x += (2.0 * a_weight / lr.dist)[:, None] * lr.wl
                    a_x -= (a_wl - lr.wl * dot(lr.wl, a_wl)[:, None]) / lr.dist[:, None]

        suffix = rec.direct.copy()
        if rec.w is not None:
            s_next = suffix_next[ids]
            suffix += rec.w * s_next
            g_w = g_direct * s_next
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where((rec.pdf > 0) & (rec.cos_i > 0), rec.cos_i / rec.pdf, 0.0)
            d_f = _finite_rows(g_w * scale[:, None], diag, "nonfinite_gradient")
            _scatter_material(grads, rec.mat, d_f, rec.terms_i, rs, m_count)
            a_cr = (d_f * rs).sum(axis=1) * rec.terms_i.dlobe_dcos_r * rec.terms_i.valid
            with np.errstate(divide="ignore", invalid="ignore"):
                a_cos = np.where(scale > 0, (g_w * rec.terms_i.value).sum(axis=1) / rec.pdf, 0.0)
            dcr_dn, _ = cos_r_gradients(rec.wi, rec.wo, rec.normal)
            a_normal += a_cr[:, None] * dcr_dn + a_cos[:, None] * rec.wi

        a_normal = _finite_rows(a_normal, diag, "nonfinite_gradient")
        a_x = _finite_rows(a_x, diag, "nonfinite_gradient")

        # geometry: normal and hit point as functions of the triangle's vertices
        N = rec.N
        n_len = np.linalg.norm(N, axis=1)
        geometric = ~accel.has_vertex_normals[rec.tri]
        a_N = np.where(
            geometric[:, None],
            rec.flip[:, None] * (a_normal - rec.normal * dot(rec.normal, a_normal)[:, None]) / n_len[:, None],
            0.0,
        )
        v = accel.tri_verts[rec.tri]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        a_t_over = dot(a_x, rec.d) / dot(N, rec.d)
        a_origin = a_x - a_t_over[:, None] * N
        a_N = a_N + a_t_over[:, None] * (v[:, 0] - rec.x)
        a_e1 = np.cross(e2, a_N)
        a_e2 = np.cross(a_N, e1)
        a_v = (a_t_over[:, None] * N - a_e1 - a_e2, a_e1, a_e2)
        corners = accel.indices[rec.tri]
        for j in range(3):
            vj = _finite_rows(a_v[j], diag, "nonfinite_gradient")
            for c in range(3):
                grads.vertices[:, c] += np.bincount(corners[:, j], vj[:, c], minlength=v_count)

        suffix_next = np.zeros((n, 3))
        suffix_next[ids] = suffix
        origin_adj = np.zeros((n, 3))
        origin_adj[ids] = _finite_rows(a_origin, diag, "nonfinite_gradient")
    return grads


# -- image-level drivers ---------------------------------------------------


def _pixel_jitter(config: RenderConfig, pixel, sample, spp):
    u = uniform(config.seed, pixel, sample, 0)
    v = uniform(config.seed, pixel, sample, 1)
    if not config.stratified:
        return u, v
    m = math.isqrt(spp - 1) + 1 if spp > 1 else 1
    strata = m * m
    tile_pixels = pixel[::spp]
    # a per-pixel random permutation of the m x m strata; the first spp are used
    keys = uniform(config.seed, tile_pixels[:, None], np.arange(strata)[None, :], _DIM_STRATUM)
    perm = np.argsort(keys, axis=1, kind="stable")[:, :spp].reshape(-1)
    return (perm % m + u) / m, (perm // m + v) / m


def _tiles(num_pixels: int, spp: int):
    step = max(1, RAY_BUDGET // spp)
    return [(s, min(s + step, num_pixels)) for s in range(0, num_pixels, step)]


def _render_tile(accel: AccelStructure, config: RenderConfig, start: int, stop: int,
                 adjoint_fn: Optional[Callable] = None):
    camera = accel.scene.camera
    spp = config.spp
    pixel = np.repeat(np.arange(start, stop), spp)
    sample = np.tile(np.arange(spp), stop - start)
    u, v = _pixel_jitter(config, pixel, sample, spp)
    origins, directions = generate_rays(camera, pixel % camera.width, pixel // camera.width, u, v)
    diag = Diagnostics()
    radiance, tape = _trace(accel, origins, directions, pixel, sample, config.seed,
                            config.max_depth, 0.0, diag, adjoint_fn is not None)
    values = radiance.reshape(stop - start, spp, 3).sum(axis=1) / spp
    values = values.astype(np.float32)
    grads = None
    if adjoint_fn is not None:
        pixel_adj = adjoint_fn(start, stop, values)
        grads = _backward(accel, tape, np.repeat(pixel_adj, spp, axis=0) / spp, diag)
    return values, grads, diag


def render_pass(accel: AccelStructure, config: RenderConfig, adjoint_fn=None, workers: int = 1):
    """Render every tile; optionally run the adjoint sweep per tile.

    ``adjoint_fn(start, stop, values)`` must return dLoss/d(pixel) for flat pixel ids
    ``start:stop``. Returns ``(image, grads or None, diagnostics)``.
    """
    camera = accel.scene.camera
    num_pixels = camera.width * camera.height
    tiles = _tiles(num_pixels, config.spp)

    def work(tile):
        return _render_tile(accel, config, tile[0], tile[1], adjoint_fn)

    if workers > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tiles))
    else:
        results = [work(t) for t in tiles]

    flat = np.zeros((num_pixels, 3), dtype=np.float32)
    diag = Diagnostics()
    grads = GradientBuffers.zeros(accel) if adjoint_fn is not None else None
    # fixed tile order keeps the reduction independent of scheduling
    for (start, stop), (values, tile_grads, tile_diag) in zip(tiles, results):
        flat[start:stop] = values
        diag.merge(tile_diag)
        if grads is not None:
            grads.add(tile_grads)
    return Image(flat.reshape(camera.height, camera.width, 3)), grads, diag


def render(scene: Scene, config: RenderConfig, accel: Optional[AccelStructure] = None,
           workers: int = 1, diagnostics: Optional[Diagnostics] = None) -> Image:
    """Per-pixel average of ``config.spp`` path samples."""
    accel = accel if accel is not None else build_accel(scene)
    image, _, diag = render_pass(accel, config, None, workers)
    if diagnostics is not None:
        diagnostics.merge(diag)
    return image


def estimate_radiance(scene: Scene, accel: AccelStructure, ray: Ray, sampler: Sampler,
                      config: RenderConfig, diagnostics: Optional[Diagnostics] = None) -> np.ndarray:
    """One path sample of the radiance arriving along ``ray``.

    Random numbers are drawn from the sampler's (seed, pixel, sample) stream.
    """
    diag = diagnostics if diagnostics is not None else Diagnostics()
    radiance, _ = _trace(
        accel,
        ray.origin[None, :],
        ray.direction[None, :],
        np.array([sampler.pixel]),
        np.array([sampler.sample]),
        sampler.seed,
        config.max_depth,
        ray.t_min,
        diag,
        False,
    )
    return radiance[0]


def estimate_radiance_batch(accel: AccelStructure, origins, directions, seed: int, max_depth: int,
                            pixel=None, sample=None, diagnostics: Optional[Diagnostics] = None):
    """Vectorised form of :func:`estimate_radiance` for many independent samples."""
    n = len(origins)
    pixel = np.zeros(n, dtype=np.int64) if pixel is None else np.asarray(pixel)
    sample = np.arange(n) if sample is None else np.asarray(sample)
    diag = diagnostics if diagnostics is not None else Diagnostics()
    radiance, _ = _trace(accel, origins, directions, pixel, sample, seed, max_depth, 0.0, diag, False)
    return radiance
