"""Normalised Phong BRDF: evaluation, partial derivatives and importance sampling.

    f(wi, wo) = rho_d / pi + rho_s * (n + 2) / (2 pi) * max(0, r . wo)^n,   r = reflect(wi)

All batched functions take row-aligned arrays: spectra ``(k, 3)``, shininess ``(k,)``
and unit vectors ``(k, 3)``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .accel import dot
from .scene import Material

INV_PI = 1.0 / math.pi
INV_2PI = 0.5 / math.pi


class PhongTerms(NamedTuple):
    value: np.ndarray  # (k, 3) BRDF value
    valid: np.ndarray  # (k,) both directions above the surface
    cos_r: np.ndarray  # (k,) clamped r . wo
    lobe: np.ndarray  # (k,) (n + 2)/(2 pi) cos_r^n
    dlobe_dshininess: np.ndarray
    dlobe_dcos_r: np.ndarray


def reflect(w, n):
    return 2.0 * dot(w, n)[..., None] * n - w


def phong_terms(rho_d, rho_s, shininess, wi, wo, normal) -> PhongTerms:
    cos_i = dot(normal, wi)
    cos_o = dot(normal, wo)
    valid = (cos_i > 0) & (cos_o > 0)
    # r . wo is symmetric in wi and wo
    cos_r = np.clip(2.0 * cos_i * cos_o - dot(wi, wo), 0.0, 1.0)
    n = shininess
    with np.errstate(divide="ignore", invalid="ignore"):
        powered = cos_r**n
        pos = cos_r > 0
        log_c = np.log(np.where(pos, cos_r, 1.0))
        lobe = (n + 2.0) * INV_2PI * powered
        dlobe_dn = np.where(pos, INV_2PI * powered + lobe * log_c, 0.0)
        dlobe_dc = np.where(pos, (n + 2.0) * INV_2PI * n * cos_r ** (n - 1.0), 0.0)
    value = rho_d * INV_PI + rho_s * lobe[:, None]
    value = np.where(valid[:, None], value, 0.0)
    return PhongTerms(value, valid, cos_r, lobe, dlobe_dn, dlobe_dc)


def cos_r_gradients(wi, wo, normal):
    """Partials of the unclamped ``r . wo`` with respect to ``normal`` and ``wi``."""
    cos_i = dot(normal, wi)[:, None]
    cos_o = dot(normal, wo)[:, None]
    d_normal = 2.0 * cos_o * wi + 2.0 * cos_i * wo
    d_wi = 2.0 * cos_o * normal - wo
    return d_normal, d_wi


def eval_brdf(material: Material, wi, wo, normal) -> np.ndarray:
    """BRDF value for a single pair of directions; zero below the horizon."""
    terms = phong_terms(
        material.rho_d[None, :],
        material.rho_s[None, :],
        np.array([material.shininess]),
        np.asarray(wi, dtype=np.float64)[None, :],
        np.asarray(wo, dtype=np.float64)[None, :],
        np.asarray(normal, dtype=np.float64)[None, :],
    )
    return terms.value[0]


def orthonormal_basis(n):
    """Two tangents completing ``n`` to a right-handed frame (branchless)."""
    x, y, z = n[:, 0], n[:, 1], n[:, 2]
    sign = np.where(z >= 0, 1.0, -1.0)
    a = -1.0 / (sign + z)
    b = x * y * a
    t = np.stack([1.0 + sign * x * x * a, sign * b, -sign * x], axis=1)
    s = np.stack([b, sign + y * y * a, -y], axis=1)
    return t, s


def _around(axis, cos_t, phi):
    t, s = orthonormal_basis(axis)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    return (
        (sin_t * np.cos(phi))[:, None] * t
        + (sin_t * np.sin(phi))[:, None] * s
        + cos_t[:, None] * axis
    )


def diffuse_probability(rho_d, rho_s):
    md = rho_d.mean(axis=-1)
    ms = rho_s.mean(axis=-1)
    total = md + ms
    return np.where(total > 0, md / np.where(total > 0, total, 1.0), 0.0), total > 0


def mixture_pdf(rho_d, rho_s, shininess, wi, wo, normal):
    p_diffuse, reflective = diffuse_probability(rho_d, rho_s)
    cos_i = dot(normal, wi)
    r = reflect(wo, normal)
    cos_a = np.clip(dot(r, wi), 0.0, 1.0)
    spec = (shininess + 1.0) * INV_2PI * cos_a**shininess
    pdf = p_diffuse * np.maximum(cos_i, 0.0) * INV_PI + (1.0 - p_diffuse) * spec
    return np.where(reflective & (cos_i > 0), pdf, 0.0)


def sample_phong(rho_d, rho_s, shininess, wo, normal, u1, u2, u_lobe=None):
    """Sample the diffuse/specular mixture.

    Returns ``(wi, pdf, specular)``. When ``u_lobe`` is None the lobe is selected by
    remapping ``u1``. ``pdf`` is the mixture density and is 0 for samples below the
    surface or for absorbing materials.
    """
    p_diffuse, reflective = diffuse_probability(rho_d, rho_s)
    if u_lobe is None:
        specular = u1 >= p_diffuse
        with np.errstate(divide="ignore", invalid="ignore"):
            u1 = np.where(
                specular,
                (u1 - p_diffuse) / np.where(p_diffuse < 1, 1.0 - p_diffuse, 1.0),
                u1 / np.where(p_diffuse > 0, p_diffuse, 1.0),
            )
        u1 = np.clip(u1, 0.0, np.nextafter(1.0, 0.0))
    else:
        specular = u_lobe >= p_diffuse
    phi = 2.0 * math.pi * u2
    # cosine-weighted hemisphere around the normal
    cos_d = np.sqrt(1.0 - u1)
    # Phong lobe around the mirror direction
    with np.errstate(divide="ignore"):
        cos_s = u1 ** (1.0 / (shininess + 1.0))
    axis = np.where(specular[:, None], reflect(wo, normal), normal)
    wi = _around(axis, np.where(specular, cos_s, cos_d), phi)
    wi /= np.linalg.norm(wi, axis=1, keepdims=True)
    pdf = mixture_pdf(rho_d, rho_s, shininess, wi, wo, normal)
    pdf = np.where(reflective, pdf, 0.0)
    return wi, pdf, specular


def sample_brdf(material: Material, wo, normal, u):
    """Importance-sample an incident direction for one shading point.

    Returns ``(wi, pdf, lobe)`` with ``lobe`` in {"diffuse", "specular"}.
    """
    wi, pdf, spec = sample_phong(
        material.rho_d[None, :],
        material.rho_s[None, :],
        np.array([material.shininess]),
        np.asarray(wo, dtype=np.float64)[None, :],
        np.asarray(normal, dtype=np.float64)[None, :],
        np.array([u[0]], dtype=np.float64),
        np.array([u[1]], dtype=np.float64),
    )
    return wi[0], float(pdf[0]), "specular" if spec[0] else "diffuse"
