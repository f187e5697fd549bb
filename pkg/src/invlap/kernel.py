"""The theta-Poisson kernel on the unit ball and the invariant Laplacian.

Powers of (1 - |x|^2) and |x - zeta| are formed in log space. Distances are
computed as |x - zeta|^2 = (1 - r)^2 + r |zeta - x/r|^2, which keeps full
relative accuracy when x is within 1e-9 of the sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import gamma_ratio

SPHERE_RENORM_TOL = 1e-8


@dataclass(frozen=True)
class ThetaParams:
    n: int
    theta: float
    c_norm: float
    c_grad: float

    @property
    def kernel_power(self):
        """Exponent n + 2 theta of |x - zeta| in the kernel."""
        return self.n + 2 * self.theta


def make_params(n: int, theta: float) -> ThetaParams:
    """Validate (n, theta) and precompute c_{n,theta} and C(n,theta).

    theta must exceed -1/2: below that the Dirichlet problem is not solvable
    for general continuous data.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"dimension n must be an integer >= 2, got {n}")
    n = int(n)
    theta = float(theta)
    if not theta > -0.5:
        raise ValueError(
            f"theta must be > -1/2 for the Dirichlet problem to be solvable, got {theta}"
        )
    c_norm = gamma_ratio([n / 2 + theta, 1 + theta], [n / 2, 1 + 2 * theta])
    c_grad = -2 * theta * (n - 2 - 2 * theta) / n * c_norm
    return ThetaParams(n, theta, c_norm, c_grad)


def check_ball_points(x, n=None) -> np.ndarray:
    """Return x as a float array of shape (m, n) with every row inside the open ball."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.ndim != 2:
        raise ValueError("ball points must be a vector or a 2-D array")
    if n is not None and x.shape[1] != n:
        raise ValueError(f"expected points in R^{n}, got dimension {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("ball points must be finite")
    r = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(r >= 1.0)
    if bad.size:
        raise ValueError(f"point {bad[0]} has norm {r[bad[0]]} >= 1")
    return x


def check_sphere_points(zeta, n=None) -> np.ndarray:
    """Return zeta as an (m, n) array of unit vectors.

    Rows whose norm is within 1e-8 of one are renormalized; others are rejected.
    """
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    if n is not None and zeta.shape[1] != n:
        raise ValueError(f"expected points in R^{n}, got dimension {zeta.shape[1]}")
    norms = np.linalg.norm(zeta, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > SPHERE_RENORM_TOL)
    if bad.size:
        raise ValueError(f"point {bad[0]} has norm {norms[bad[0]]}, not on the unit sphere")
    return zeta / norms[:, None]


def _geometry(x, zeta):
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r >= 1.0:
        raise ValueError(f"x must lie inside the unit ball, |x| = {r}")
    gap = 1.0 - r
    if r == 0.0:
        dist2 = np.ones(zeta.shape[:-1])
    else:
        dz = zeta - x / r
        dist2 = gap * gap + r * np.einsum("...i,...i->...", dz, dz)
    return x, r, gap, gap * (1.0 + r), dist2


def poisson_kernel(p: ThetaParams, x, zeta):
    """c (1 - |x|^2)^(1 + 2 theta) / |x - zeta|^(n + 2 theta).

    ``x`` is one point of the ball, ``zeta`` one point or an (m, n) array of
    sphere points.
    """
    zeta = np.asarray(zeta, dtype=float)
    _, _, _, defect, dist2 = _geometry(x, zeta)
    log_k = (1 + 2 * p.theta) * math.log(defect) - 0.5 * p.kernel_power * np.log(dist2)
    return p.c_norm * np.exp(log_k)


def poisson_kernel_gradient(p: ThetaParams, x, zeta):
    """Gradient of the kernel in x; shape (n,) or (m, n)."""
    zeta = np.asarray(zeta, dtype=float)
    x, _, _, defect, dist2 = _geometry(x, zeta)
    k = p.c_norm * np.exp((1 + 2 * p.theta) * math.log(defect)
                          - 0.5 * p.kernel_power * np.log(dist2))
    dist2 = np.asarray(dist2)[..., None]
    return k[..., None] * (-2 * (1 + 2 * p.theta) * x / defect
                           - p.kernel_power * (x - zeta) / dist2)


def zonal_kernel(p: ThetaParams, r, gaps):
    """Kernel at x = r e1 as a function of 1 - t, t = zeta . e1."""
    gap = 1.0 - r
    dist2 = gap * gap + 2.0 * r * gaps
    return p.c_norm * np.exp((1 + 2 * p.theta) * math.log(gap * (1.0 + r))
                             - 0.5 * p.kernel_power * np.log(dist2))


def zonal_kernel_dx1(p: ThetaParams, r, gaps):
    """d/dx1 of the kernel at x = r e1 as a function of 1 - t."""
    gap = 1.0 - r
    defect = gap * (1.0 + r)
    dist2 = gap * gap + 2.0 * r * gaps
    k = zonal_kernel(p, r, gaps)
    # r - t = (1 - t) - (1 - r)
    return k * (-2 * (1 + 2 * p.theta) * r / defect
                - p.kernel_power * (gaps - gap) / dist2)


def default_step(x) -> float:
    return max(1e-5, 1e-3 * (1.0 - float(np.linalg.norm(x))))


def apply_delta_theta(p: ThetaParams, u, x, h=None) -> float:
    """Central-difference evaluation of Delta_theta u at x.

    Delta_theta u = (1 - |x|^2) [ (1 - |x|^2)/4 Lap u + theta x . grad u
                                  + theta (n/2 - 1 - theta) u ].
    ``u`` maps a point of the ball to a real number.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"x must be a point of R^{p.n}")
    h = default_step(x) if h is None else float(h)
    if not h > 0:
        raise ValueError("step must be positive")
    r = float(np.linalg.norm(x))
    if 1.0 - r <= 2 * h:
        raise ValueError(f"stencil of step {h} leaves the ball at |x| = {r}")
    u0 = float(u(x))
    lap = 0.0
    radial = 0.0
    for j in range(p.n):
        e = np.zeros(p.n)
        e[j] = h
        up, um = float(u(x + e)), float(u(x - e))
        lap += (up - 2 * u0 + um) / (h * h)
        radial += x[j] * (up - um) / (2 * h)
    defect = (1.0 - r) * (1.0 + r)
    th = p.theta
    return defect * (defect / 4 * lap + th * radial + th * (p.n / 2 - 1 - th) * u0)
