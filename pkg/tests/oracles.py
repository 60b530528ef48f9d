"""Independent reference implementations used to derive expected values.

Nothing here imports the package under test; each oracle is written from the
underlying formulas so agreement is a genuine cross-check.
"""

import math

import numpy as np


# -- camera ------------------------------------------------------------------


def pinhole_directions(eye, target, up, fov_deg, width, height, fx, fy):
    """Unit ray directions through film positions ``(fx, fy)`` in pixel units.

    ``fx`` runs left to right over [0, width], ``fy`` top to bottom over [0, height].
    """
    eye, target, up = (np.asarray(a, dtype=float) for a in (eye, target, up))
    w = target - eye
    w = w / math.sqrt(w @ w)
    r = np.cross(w, up)
    r = r / math.sqrt(r @ r)
    u = np.cross(r, w)
    half = math.tan(math.radians(fov_deg) * 0.5)
    sx = (2.0 * fx / width - 1.0) * half * (width / height)
    sy = (1.0 - 2.0 * fy / height) * half
    d = w + sx[..., None] * r + sy[..., None] * u
    return d / np.sqrt((d * d).sum(-1))[..., None]


def plane_hits(eye, dirs):
    """Intersection points of rays from ``eye`` with the plane z = 0."""
    t = -eye[2] / dirs[..., 2]
    return eye + t[..., None] * dirs


# -- radiometry --------------------------------------------------------------


def lambert_point_light(points, normal, rho, light, intensity):
    """Outgoing radiance ``rho/pi * I * cos / d^2`` at ``points`` lit by a point light."""
    to = np.asarray(light, dtype=float) - points
    d2 = (to * to).sum(-1)
    cos = np.clip((to @ np.asarray(normal, dtype=float)) / np.sqrt(d2), 0.0, None)
    return rho / math.pi * intensity * cos / d2


def analytic_plane_pixels(width, height, fov, cam_h, light_h, rho, intensity, sub=16):
    """Pixel-footprint average of the direct radiance for the plane-under-a-light scene.

    Each pixel is integrated with a ``sub x sub`` midpoint rule over its film area,
    which is what an unbiased renderer with uniform pixel jitter converges to.
    """
    eye = np.array([0.0, 0.0, cam_h])
    offs = (np.arange(sub) + 0.5) / sub
    py, px = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    fx = px[..., None, None] + offs[None, None, None, :]
    fy = py[..., None, None] + offs[None, None, :, None]
    fx, fy = np.broadcast_arrays(fx, fy)
    dirs = pinhole_directions(eye, (0, 0, 0), (0, 1, 0), fov, width, height, fx, fy)
    pts = plane_hits(eye, dirs)
    radiance = lambert_point_light(pts, (0, 0, 1), rho, (0, 0, light_h), intensity)
    return radiance.mean(axis=(-1, -2))


def analytic_center_value(rho, intensity, light_h):
    """Radiance straight below the light: ``rho/pi * I / h^2``."""
    return rho / math.pi * intensity / light_h**2


def two_plane_pixels(width, height, sub=4, wall_n=48):
    """Reference image for the floor-and-wall scene rendered with one indirect bounce.

    Floor z=0 (albedo 0.6), wall x=1 spanning y in [-3, 3], z in [0, 3] (albedo 0.9),
    point light I=5 at (0, 0, 1.5), camera at (0, 0, 2.5) looking down with a 20 degree
    field of view. Indirect light is the area integral over the wall of
    ``f_floor * L_wall(y) * cos_x * cos_y / r^2`` with a midpoint rule.
    """
    rho_f, rho_w, inten = 0.6, 0.9, 5.0
    light = np.array([0.0, 0.0, 1.5])
    eye = np.array([0.0, 0.0, 2.5])
    offs = (np.arange(sub) + 0.5) / sub
    py, px = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    fx = px[..., None, None] + offs[None, None, None, :]
    fy = py[..., None, None] + offs[None, None, :, None]
    fx, fy = np.broadcast_arrays(fx, fy)
    dirs = pinhole_directions(eye, (0, 0, 0), (0, 1, 0), 20.0, width, height, fx, fy)
    pts = plane_hits(eye, dirs).reshape(-1, 3)
    direct = lambert_point_light(pts, (0, 0, 1), rho_f, light, inten)

    # wall quadrature cells
    ys = -3.0 + (np.arange(wall_n) + 0.5) * 6.0 / wall_n
    zs = (np.arange(wall_n) + 0.5) * 3.0 / wall_n
    wy, wz = np.meshgrid(ys, zs, indexing="ij")
    wall = np.stack([np.ones(wy.size), wy.ravel(), wz.ravel()], axis=1)
    cell = (6.0 / wall_n) * (3.0 / wall_n)
    l_wall = lambert_point_light(wall, (-1, 0, 0), rho_w, light, inten)

    indirect = np.zeros(len(pts))
    for i in range(0, len(pts), 256):
        p = pts[i : i + 256]
        diff = wall[None, :, :] - p[:, None, :]
        r2 = (diff * diff).sum(-1)
        r = np.sqrt(r2)
        cos_x = np.clip(diff[..., 2] / r, 0, None)
        cos_y = np.clip(diff[..., 0] / r, 0, None)
        g = cos_x * cos_y / r2
        indirect[i : i + 256] = rho_f / math.pi * (g * l_wall[None, :]).sum(-1) * cell
    total = (direct + indirect).reshape(height, width, sub * sub).mean(-1)
    ind = indirect.reshape(height, width, sub * sub).mean(-1)
    return total, ind


# -- BRDF --------------------------------------------------------------------


def phong_value(rho_d, rho_s, n, wi, wo, normal):
    """Scalar normalised Phong BRDF for one channel."""
    wi, wo, normal = (np.asarray(a, dtype=float) for a in (wi, wo, normal))
    r = 2.0 * (wo @ normal) * normal - wo
    c = max(0.0, float(r @ wi))
    return rho_d / math.pi + rho_s * (n + 2.0) / (2.0 * math.pi) * c**n


def phong_albedo_quadrature(rho_d, rho_s, n, wo, n_theta=1200, n_phi=1200):
    """Directional-hemispherical reflectance by a midpoint rule in (theta, phi).

    The normal is +z. Returns ``integral f(wi, wo) cos(theta_i) dwi`` for one channel.
    """
    wo = np.asarray(wo, dtype=float)
    th = (np.arange(n_theta) + 0.5) * (0.5 * math.pi / n_theta)
    ph = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    st, ct = np.sin(th)[:, None], np.cos(th)[:, None]
    wi = np.stack(np.broadcast_arrays(st * np.cos(ph), st * np.sin(ph), ct), axis=-1)
    r = np.array([-wo[0], -wo[1], wo[2]])
    c = np.clip(wi @ r, 0.0, None)
    f = rho_d / math.pi + rho_s * (n + 2.0) / (2.0 * math.pi) * c**n
    dw = (0.5 * math.pi / n_theta) * (2.0 * math.pi / n_phi) * st
    return float((f * ct * dw).sum())


# -- Adam --------------------------------------------------------------------


def adam_scalar(theta, grads, lr=0.02, beta1=0.9, beta2=0.999, eps=1e-8):
    """Reference Adam trajectory for one scalar, epsilon inside the square root."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - lr * m_hat / math.sqrt(v_hat + eps)
        out.append(theta)
    return out


# -- geometry ----------------------------------------------------------------


def ray_triangle_scalar(o, d, a, b, c):
    """Plane-then-inside-test intersection distance, or None.

    Solves for the plane hit and checks the point against the three edge
    half-planes; deliberately a different algorithm from Moller-Trumbore.
    """
    o, d, a, b, c = (np.asarray(x, dtype=float) for x in (o, d, a, b, c))
    n = np.cross(b - a, c - a)
    denom = n @ d
    if abs(denom) < 1e-14:
        return None
    t = (n @ (a - o)) / denom
    if t < 0:
        return None
    p = o + t * d
    for e0, e1 in ((a, b), (b, c), (c, a)):
        if np.cross(e1 - e0, p - e0) @ n < -1e-12 * (n @ n):
            return None
    return t
