"""Integration over the unit sphere with the measure normalized to total mass 1.

Three families of rules are provided:

* ``SphereRule`` -- nodes on S^{n-1} with positive weights summing to one
  (equispaced circle rule, polar product rules, seeded Monte Carlo).
* ``ZonalRule`` -- one-dimensional rules in t = zeta . e1 for integrands that
  depend on zeta only through t. The density of t is proportional to
  (1 - t^2)^((n-3)/2).
* ``graded_zonal_rule`` -- a composite Gauss-Legendre rule in the polar angle,
  geometrically refined towards the pole; used when the integrand
  concentrates in a cap of radius ~ (1 - r) around e1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .specfun import log_gamma

RULE_FORMAT_VERSION = 1
# adaptive_size_for cap on the node count
DEFAULT_SIZE_CAP = 32768
# sphere rules built for Monte Carlo integration near the boundary
MONTE_CARLO_CAP = 2_000_000
NEWTON_TOL = 1e-14
KINDS = ("circle-trapezoid", "product-gauss", "monte-carlo")


@dataclass(frozen=True, eq=False)
class SphereRule:
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.nodes.ndim != 2 or self.nodes.shape[1] != self.n:
            raise ValueError("nodes must have shape (size, n)")
        if len(self.weights) != len(self.nodes) or len(self.nodes) < 2:
            raise ValueError("need at least two nodes with one weight each")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class ZonalRule:
    """Rule for integrals of g(zeta . e1) over S^{n-1}.

    ``gaps`` holds 1 - t computed without cancellation, which matters for
    abscissae within 1e-8 of the pole.
    """

    n: int
    t: np.ndarray
    weights: np.ndarray
    gaps: np.ndarray = field(default=None)
    kind: str = "gauss-jacobi"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.gaps is None:
            object.__setattr__(self, "gaps", 1.0 - self.t)
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("zonal weights must be positive and sum to one")
        for arr in (self.t, self.weights, self.gaps):
            arr.setflags(write=False)

    @property
    def size(self):
        return len(self.weights)

    @property
    def sines(self):
        """sqrt(1 - t^2), from the gaps."""
        return np.sqrt(self.gaps * (2.0 - self.gaps))

    def integrate(self, values):
        return self.weights @ values


def zonal_density_constant(n):
    """Normalizer of (1 - t^2)^((n-3)/2) dt on [-1, 1] to a probability density."""
    return math.exp(log_gamma(n / 2) - log_gamma((n - 1) / 2)) / math.sqrt(math.pi)


def _jacobi_newton(m, alpha):
    """Polar angles of the zeros in (0, pi/2] of P_m^(alpha, alpha) and weights.

    Newton iteration in the angle on the three-term recurrence; the
    asymptotic initial guesses are exact for alpha = +-1/2.
    """
    a = b = alpha
    i = np.arange(1, (m + 1) // 2 + 1)
    phi = (i - 0.25 + alpha / 2) * np.pi / (m + alpha + 0.5)
    prev_step = np.inf
    for _ in range(100):
        z = np.cos(phi)
        prev = np.ones_like(z)
        cur = (a + 1) + (a + b + 2) * (z - 1) / 2
        for k in range(1, m):
            s = 2 * k + a + b
            nxt = ((s + 1) * ((s + 2) * s * z + a * a - b * b) * cur
                   - 2 * (k + a) * (k + b) * (s + 2) * prev) / (2 * (k + 1) * (k + a + b + 1) * s)
            prev, cur = cur, nxt
        s = 2 * m + a + b
        sin2 = np.sin(phi) ** 2
        deriv = (m * ((a - b) - s * z) * cur + 2 * (m + a) * (m + b) * prev) / (s * sin2)
        step = cur / (np.sin(phi) * deriv)
        phi = phi + step
        max_step = np.max(np.abs(step))
        # rounding noise can keep steps just above the tolerance
        if max_step < NEWTON_TOL or (max_step < 1e-11 and max_step > 0.5 * prev_step):
            break
        prev_step = max_step
    else:
        raise ArithmeticError(f"Gauss-Jacobi Newton iteration stalled for m={m}")
    # weights proportional to 1 / ((1 - z^2) P'(z)^2), up to a common constant
    w = 1.0 / (np.sin(phi) ** 2 * deriv ** 2)
    return phi, w


@lru_cache(maxsize=64)
def build_zonal_rule(n: int, m: int) -> ZonalRule:
    """m-point Gauss-Jacobi rule for the density of zeta . e1 on S^{n-1}.

    Exact for polynomials in t of degree <= 2m - 1.
    """
    if n < 2:
        raise ValueError("zonal rules need n >= 2")
    if m < 2:
        raise ValueError("zonal rules need m >= 2")
    phi, w = _jacobi_newton(m, (n - 3) / 2)
    half = m // 2
    # mirror the zeros in (0, pi/2) to (pi/2, pi); odd m keeps the middle once
    phi_all = np.concatenate([phi, np.pi - phi[:half][::-1]])
    w_all = np.concatenate([w, w[:half][::-1]])
    w_all = w_all / w_all.sum()
    return ZonalRule(n, np.cos(phi_all), w_all, 2.0 * np.sin(phi_all / 2) ** 2, "gauss-jacobi")


def _graded_edges(gap, depth):
    edges = [0.0]
    h = gap * 2.0 ** -depth
    while h < 0.75 * math.pi / 2:
        edges.append(h)
        h *= 2.0
    edges.append(math.pi / 2)
    edges.extend(np.linspace(math.pi / 2, math.pi, 5)[1:])
    return np.asarray(edges)


@lru_cache(maxsize=256)
def graded_zonal_rule(n: int, gap: float, order: int = 24, depth: int = 12) -> ZonalRule:
    """Composite Gauss-Legendre rule in the polar angle, graded towards t = 1.

    Panels double in width from ``gap * 2**-depth`` up to pi/2; the kink of
    max(0, t) at t = 0 sits on a panel edge. ``gap`` is the distance 1 - r of
    the evaluation point to the sphere.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    gap = min(max(float(gap), 1e-300), 1.0)
    x, wx = np.polynomial.legendre.leggauss(order)
    edges = _graded_edges(gap, depth)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = (hi - lo) / 2
    phi = (lo + half * (x + 1)).ravel()
    w = (half * wx).ravel() * np.sin(phi) ** (n - 2) * zonal_density_constant(n)
    w = w / w.sum()
    return ZonalRule(n, np.cos(phi), w, 2.0 * np.sin(phi / 2) ** 2, "graded")


def adaptive_size_for(r: float, base: int, cap: int = DEFAULT_SIZE_CAP) -> int:
    """Node count base * ceil(1 / (1 - r)), capped at ``cap``."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"radius must lie in [0, 1), got {r}")
    return int(min(base * math.ceil(1.0 / (1.0 - r)), cap))


def _circle_rule(size, offset=0.0):
    ang = 2 * np.pi * (np.arange(size) + offset) / size
    nodes = np.column_stack([np.cos(ang), np.sin(ang)])
    return SphereRule(2, nodes, np.full(size, 1.0 / size), "circle-trapezoid")


def product_sphere_rule(n: int, polar: ZonalRule, sub_size: int = 32) -> SphereRule:
    """Polar product rule about e1: zeta = (t, sqrt(1 - t^2) eta).

    ``polar`` supplies t, eta runs over a deterministic rule on S^{n-2}
    (the two points +-1 when n = 2, equispaced circle when n = 3, recursive
    products above).
    """
    if polar.n != n:
        raise ValueError("polar rule dimension mismatch")
    if n == 2:
        eta, ew = np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    else:
        sub = sphere_product_default(n - 1, sub_size)
        eta, ew = sub.nodes, sub.weights
    sines = polar.sines
    nodes = np.concatenate(
        [polar.t[:, None, None] * np.ones((1, len(ew), 1)),
         sines[:, None, None] * eta[None, :, :]], axis=2,
    ).reshape(-1, n)
    weights = (polar.weights[:, None] * ew[None, :]).ravel()
    weights = weights / weights.sum()
    return SphereRule(n, nodes, weights, "product-gauss")


@lru_cache(maxsize=32)
def sphere_product_default(n: int, size: int) -> SphereRule:
    """Deterministic rule with about ``size`` points per polar direction."""
    if n == 2:
        return _circle_rule(max(size, 2))
    polar = build_zonal_rule(n, max(size // 2, 2))
    return product_sphere_rule(n, polar, size)


def monte_carlo_rule(n: int, size: int, seed: int) -> SphereRule:
    """Uniform random directions from normalized standard Gaussian vectors."""
    if seed is None:
        raise ValueError("monte-carlo rules need a seed")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((size, n))
    nodes = g / np.linalg.norm(g, axis=1, keepdims=True)
    return SphereRule(n, nodes, np.full(size, 1.0 / size), "monte-carlo", seed)


def build_sphere_rule(n: int, size, seed: int | None = None) -> SphereRule:
    """Default rule on S^{n-1}.

    n = 2: ``size`` equispaced nodes. n = 3: Gauss-Legendre in the polar
    cosine times an equispaced azimuth; ``size`` may be an int or a pair
    (polar, azimuth). n >= 4: ``size`` seeded Monte Carlo nodes.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if n == 2:
        if int(size) < 2:
            raise ValueError("size must be at least 2")
        return _circle_rule(int(size))
    if n == 3:
        if np.ndim(size) == 0:
            size = int(size)
            if size < 4:
                raise ValueError("size must be at least 4 for n = 3")
            n_pol = max(2, int(round(math.sqrt(size / 2))))
            n_az = max(2, size // n_pol)
        else:
            n_pol, n_az = (int(s) for s in size)
            if n_pol < 2 or n_az < 2:
                raise ValueError("polar and azimuthal sizes must be at least 2")
        polar = build_zonal_rule(3, n_pol)
        return product_sphere_rule(3, polar, n_az)
    if int(size) < 2:
        raise ValueError("size must be at least 2")
    if seed is None:
        raise ValueError("monte-carlo rules (n >= 4) need a seed")
    return monte_carlo_rule(n, int(size), seed)


def integrate_sphere(rule: SphereRule, f, return_stderr: bool = False):
    """Sum_i w_i f(node_i). ``f`` maps an (m, n) array to m values (or (m, k)).

    With ``return_stderr`` also returns the Monte Carlo standard error
    (0 for deterministic rules).
    """
    values = np.asarray(f(rule.nodes), dtype=float)
    total = rule.weights @ values
    if not return_stderr:
        return total
    if rule.kind != "monte-carlo":
        return total, np.zeros_like(total)
    m = rule.size
    var = np.var(values, axis=0, ddof=1)
    return total, np.sqrt(var / m)


def integrate_zonal(rule: ZonalRule, g):
    """Sum_i w_i g(t_i): the sphere integral of zeta -> g(zeta . e1)."""
    return rule.weights @ np.asarray(g(rule.t), dtype=float)


def save_rule(rule: SphereRule, path) -> None:
    """Write a rule as text: a header then one node and weight per line."""
    with open(path, "w") as fh:
        fh.write(f"# invlap-rule v{RULE_FORMAT_VERSION}\n")
        fh.write(f"# n={rule.n} kind={rule.kind} seed={rule.seed} size={rule.size}\n")
        for node, w in zip(rule.nodes, rule.weights):
            fh.write(" ".join(repr(float(v)) for v in node) + f" {float(w)!r}\n")


def load_rule(path) -> SphereRule:
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# invlap-rule v{RULE_FORMAT_VERSION}":
            raise ValueError(f"unsupported rule file header: {first!r}")
        meta = dict(item.split("=", 1) for item in fh.readline().lstrip("# ").split())
        data = np.loadtxt(fh, ndmin=2)
    n = int(meta["n"])
    seed = None if meta["seed"] == "None" else int(meta["seed"])
    if data.shape != (int(meta["size"]), n + 1):
        raise ValueError("rule file body does not match its header")
    return SphereRule(n, data[:, :n].copy(), data[:, n].copy(), meta["kind"], seed)
