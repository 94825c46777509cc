"""Smooth star-shaped planar domains, interior quadrature and the
inversion that flattens a domain against its tangent line.

Boundary curves are sampled at ``M`` equispaced parameter values
``t_j = j / M`` on the unit period.  Derivatives are taken with respect to
``t``; the outward normal is the tangent rotated clockwise, which is outward
for counterclockwise curves.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial.distance import pdist

from .fields import HarmonicField, as_points

SHAPES = ("circle", "ellipse", "stadium", "fourier", "indented")


# ---------------------------------------------------------------------------
# periodic sampling helpers
# ---------------------------------------------------------------------------
def spectral_derivative(samples: np.ndarray, order: int = 1) -> np.ndarray:
    """Derivative of periodic samples on [0, 1) along axis 0."""
    samples = np.asarray(samples)
    M = samples.shape[0]
    k = np.fft.fftfreq(M, d=1.0 / M)
    mult = (2j * np.pi * k) ** order
    if M % 2 == 0 and order % 2 == 1:
        mult[M // 2] = 0.0
    shape = (M,) + (1,) * (samples.ndim - 1)
    out = np.fft.ifft(np.fft.fft(samples, axis=0) * mult.reshape(shape), axis=0)
    return out.real if np.isrealobj(samples) else out


def resample_periodic(samples: np.ndarray, n: int) -> np.ndarray:
    """Trigonometric interpolation of periodic samples onto ``n`` nodes."""
    samples = np.asarray(samples)
    if samples.shape[0] == n:
        return samples.copy()
    return signal.resample(samples, n, axis=0)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Domain2D:
    """Closed, simple, counterclockwise curve star-shaped about ``center``."""

    points: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    center: np.ndarray
    label: str = "curve"
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        for name in ("points", "d1", "d2", "center"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.check:
            self.validate()

    # -- invariants -------------------------------------------------------
    def validate(self) -> None:
        M = self.M
        if M < 8:
            raise ValueError("a boundary needs at least 8 nodes")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("boundary samples must be finite")
        vis = _cross(self.points - self.center, self.d1)
        if np.any(vis <= 0.0):
            j = int(np.argmin(vis))
            raise ValueError(
                f"{self.label}: not star-shaped about center {tuple(self.center)}; "
                f"node {j} at {tuple(self.points[j])} is not visible (cross={vis[j]:.3e})"
            )
        if abs(float(np.max(np.abs(np.einsum("ij,ij->i", self.normal, self.tangent))))) > 1e-12:
            raise ValueError("normal is not orthogonal to tangent")
        scale = float(np.max(np.abs(self.points - self.center)))
        if cKDTree(self.points).query_pairs(1e-13 * scale):
            raise ValueError(f"{self.label}: curve is not simple (repeated nodes)")

    # -- derived quantities ----------------------------------------------
    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    @property
    def z(self) -> np.ndarray:
        return self.points[:, 0] + 1j * self.points[:, 1]

    @property
    def dz(self) -> np.ndarray:
        return self.d1[:, 0] + 1j * self.d1[:, 1]

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.d1[:, 0], self.d1[:, 1])

    @property
    def tangent(self) -> np.ndarray:
        return self.d1 / self.speed[:, None]

    @property
    def normal(self) -> np.ndarray:
        tau = self.tangent
        return np.column_stack([tau[:, 1], -tau[:, 0]])

    @property
    def curvature(self) -> np.ndarray:
        return _cross(self.d1, self.d2) / self.speed**3

    @property
    def weights(self) -> np.ndarray:
        """Arc-length trapezoidal weights."""
        return self.speed / self.M

    @property
    def length(self) -> float:
        return float(np.sum(self.weights))

    @property
    def area(self) -> float:
        return float(0.5 * np.sum(_cross(self.points - self.center, self.d1)) / self.M)

    @property
    def node_spacing(self) -> float:
        return self.length / self.M

    @property
    def diameter(self) -> float:
        hull = self.points[ConvexHull(self.points).vertices]
        return float(np.max(pdist(hull)))

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_samples(cls, points, center=None, label: str = "samples") -> "Domain2D":
        """Build a domain from periodic samples; derivatives are spectral."""
        pts = np.asarray(points, dtype=float)
        d1 = spectral_derivative(pts, 1)
        if np.sum(_cross(pts, d1)) < 0.0:
            pts = np.roll(pts[::-1], 1, axis=0)
            d1 = spectral_derivative(pts, 1)
        d2 = spectral_derivative(pts, 2)
        if center is None:
            center = pts.mean(axis=0)
        return cls(pts, d1, d2, np.asarray(center, dtype=float), label)

    def resampled(self, n: int) -> "Domain2D":
        pts = resample_periodic(self.points, n)
        return Domain2D(
            pts,
            resample_periodic(self.d1, n),
            resample_periodic(self.d2, n),
            self.center,
            self.label,
        )

    # -- queries --------------------------------------------------------------
    def contains(self, points) -> np.ndarray:
        """Winding-number test against the node polygon."""
        pts = as_points(points)
        rel = self.z[None, :] - (pts[:, 0] + 1j * pts[:, 1])[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            ang = np.angle(np.roll(rel, -1, axis=1) / rel)
        return np.abs(np.nansum(ang, axis=1)) > np.pi

    def distance_to_boundary(self, points) -> np.ndarray:
        pts = as_points(points)
        diff = pts[:, None, :] - self.points[None, :, :]
        return np.min(np.hypot(diff[..., 0], diff[..., 1]), axis=1)

    def to_csv(self, path) -> None:
        nu = self.normal
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x1", "x2", "nu1", "nu2"])
            for j in range(self.M):
                writer.writerow(
                    [repr(float(self.t[j])), repr(float(self.points[j, 0])),
                     repr(float(self.points[j, 1])), repr(float(nu[j, 0])),
                     repr(float(nu[j, 1]))]
                )


@dataclass(frozen=True)
class BoundaryPartition:
    """Closed set Gamma as a union of parameter intervals; Sigma is the rest.

    An interval ``(t0, t1)`` with ``t0 > t1`` wraps through ``t = 0``.
    """

    gamma_intervals: tuple

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.gamma_intervals)
        for a, b in ivs:
            if not (0.0 <= a < 1.0 and 0.0 <= b < 1.0):
                raise ValueError("interval endpoints must lie in [0, 1)")
        object.__setattr__(self, "gamma_intervals", ivs)
        probe = np.arange(4096) / 4096
        if np.all(self.gamma_mask_t(probe)):
            raise ValueError("Gamma must be a proper subset (Sigma nonempty)")

    def gamma_mask_t(self, t) -> np.ndarray:
        t = np.mod(np.asarray(t, dtype=float), 1.0)
        mask = np.zeros(t.shape, dtype=bool)
        for a, b in self.gamma_intervals:
            if a <= b:
                mask |= (t >= a) & (t <= b)
            else:
                mask |= (t >= a) | (t <= b)
        return mask

    def gamma_mask(self, domain: Domain2D) -> np.ndarray:
        return self.gamma_mask_t(domain.t)

    def sigma_mask(self, domain: Domain2D) -> np.ndarray:
        return ~self.gamma_mask(domain)

    @classmethod
    def from_mask(cls, domain: Domain2D, mask) -> "BoundaryPartition":
        """Intervals spanning the runs of ``True`` nodes in ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        if mask.all():
            raise ValueError("Gamma must be a proper subset (Sigma nonempty)")
        t = domain.t
        start = int(np.argmin(mask))  # a Sigma node, so runs do not wrap from here
        order = np.roll(np.arange(domain.M), -start)
        ivs = []
        run = []
        for j in order:
            if mask[j]:
                run.append(j)
            elif run:
                ivs.append((t[run[0]], t[run[-1]]))
                run = []
        if run:
            ivs.append((t[run[0]], t[run[-1]]))
        return cls(tuple(ivs))

    @classmethod
    def halfplane(cls, domain: Domain2D, threshold: float) -> "BoundaryPartition":
        """Gamma = boundary nodes with ``x1 <= threshold``."""
        return cls.from_mask(domain, domain.points[:, 0] <= threshold)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------
def _polar_domain(center, r, dr, ddr, M, label) -> Domain2D:
    t = np.arange(M) / M
    th = 2.0 * np.pi * t
    rr, r1, r2 = r(th), dr(th), ddr(th)
    if np.any(rr <= 0.0):
        raise ValueError(f"{label}: radius function must be positive (not star-shaped)")
    er = np.column_stack([np.cos(th), np.sin(th)])
    et = np.column_stack([-np.sin(th), np.cos(th)])
    c = np.asarray(center, dtype=float)
    w = 2.0 * np.pi
    pts = c + rr[:, None] * er
    d1 = w * (r1[:, None] * er + rr[:, None] * et)
    d2 = w * w * ((r2 - rr)[:, None] * er + 2.0 * r1[:, None] * et)
    return Domain2D(pts, d1, d2, c, label)


def _smooth_bump(theta, halfwidth):
    """exp(1 - 1/(1 - q^2)) on |q| < 1 with q = theta / halfwidth; C-infinity."""
    th = np.angle(np.exp(1j * theta))
    q = th / halfwidth
    inside = np.abs(q) < 1.0
    s = np.where(inside, 1.0 - q * q, 1.0)
    b = np.where(inside, np.exp(1.0 - 1.0 / s), 0.0)
    g = np.where(inside, -2.0 * q / (halfwidth * s * s), 0.0)
    gp = np.where(inside, -2.0 / (halfwidth**2 * s * s) - 8.0 * q * q / (halfwidth**2 * s**3), 0.0)
    return b, b * g, b * (g * g + gp)


def make_domain(shape, M: int = 256, **params) -> Domain2D:
    """Sample a named analytic curve.

    ``shape`` is a name from :data:`SHAPES` or a dict with a ``"shape"`` key
    and the parameters.  Parameters (defaults in brackets):

    circle    radius [1], center [(0, 0)]
    ellipse   a [1], b [1], angle [0], center
    stadium   a [1.5], b [1]: quartic superellipse, a smoothed stadium
    fourier   radius [1], amplitude [0.1], mode [3], phase [0], center
    indented  radius [1], depth [0.3], halfwidth [1]: circle pushed inward by
              a compactly supported C-infinity bump around angle 0
    """
    if isinstance(shape, dict):
        params = {**{k: v for k, v in shape.items() if k != "shape"}, **params}
        shape = shape["shape"]
    if shape == "smoothed-stadium":
        shape = "stadium"
    if shape == "fourier-perturbed-circle":
        shape = "fourier"
    if M < 64 or M % 2:
        raise ValueError(f"M must be even and >= 64, got {M}")
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    center = np.asarray(params.pop("center", (0.0, 0.0)), dtype=float)

    if shape == "circle":
        R = float(params.pop("radius", 1.0))
        if R <= 0:
            raise ValueError("circle radius must be positive")
        zero = lambda th: 0.0 * th  # noqa: E731
        dom = _polar_domain(center, lambda th: R + 0.0 * th, zero, zero, M, "circle")
    elif shape == "ellipse":
        a = float(params.pop("a", 1.0))
        b = float(params.pop("b", 1.0))
        ang = float(params.pop("angle", 0.0))
        if a <= 0 or b <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        th = 2.0 * np.pi * np.arange(M) / M
        rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
        w = 2.0 * np.pi
        p = np.column_stack([a * np.cos(th), b * np.sin(th)])
        p1 = w * np.column_stack([-a * np.sin(th), b * np.cos(th)])
        dom = Domain2D(center + p @ rot.T, p1 @ rot.T, -(w * w) * p @ rot.T, center, "ellipse")
    elif shape == "stadium":
        a = float(params.pop("a", 1.5))
        b = float(params.pop("b", 1.0))
        if a <= 0 or b <= 0:
            raise ValueError("stadium half-axes must be positive")

        def parts(th):
            c, s = np.cos(th), np.sin(th)
            S = c**4 / a**4 + s**4 / b**4
            S1 = -4 * c**3 * s / a**4 + 4 * s**3 * c / b**4
            S2 = (12 * c * c * s * s - 4 * c**4) / a**4 + (12 * s * s * c * c - 4 * s**4) / b**4
            r = S**-0.25
            r1 = -0.25 * S**-1.25 * S1
            r2 = (5.0 / 16.0) * S**-2.25 * S1 * S1 - 0.25 * S**-1.25 * S2
            return r, r1, r2

        dom = _polar_domain(center, lambda th: parts(th)[0], lambda th: parts(th)[1],
                            lambda th: parts(th)[2], M, "stadium")
    elif shape == "fourier":
        R = float(params.pop("radius", 1.0))
        eps = float(params.pop("amplitude", 0.1))
        m = int(params.pop("mode", 3))
        ph = float(params.pop("phase", 0.0))
        if R <= 0 or abs(eps) >= 1.0:
            raise ValueError(
                f"fourier-perturbed circle needs radius > 0 and |amplitude| < 1 "
                f"(got radius={R}, amplitude={eps}); otherwise the curve is not star-shaped"
            )
        dom = _polar_domain(
            center,
            lambda th: R * (1.0 + eps * np.cos(m * th + ph)),
            lambda th: -R * eps * m * np.sin(m * th + ph),
            lambda th: -R * eps * m * m * np.cos(m * th + ph),
            M,
            "fourier",
        )
    else:
        R = float(params.pop("radius", 1.0))
        depth = float(params.pop("depth", 0.3))
        hw = float(params.pop("halfwidth", 1.0))
        if not (0.0 <= depth < 1.0) or not (0.0 < hw < np.pi):
            raise ValueError("indented circle needs 0 <= depth < 1 and 0 < halfwidth < pi")
        dom = _polar_domain(
            center,
            lambda th: R * (1.0 - depth * _smooth_bump(th, hw)[0]),
            lambda th: -R * depth * _smooth_bump(th, hw)[1],
            lambda th: -R * depth * _smooth_bump(th, hw)[2],
            M,
            "indented",
        )
    if params:
        raise ValueError(f"unused parameters for {shape}: {sorted(params)}")
    return dom


# ---------------------------------------------------------------------------
# quadrature and support functions
# ---------------------------------------------------------------------------
def interior_quadrature(domain: Domain2D, n_radial: int = 64, n_angular: Optional[int] = None):
    """Tensor Gauss-Legendre (radial) x trapezoid (angular) rule on a
    star-shaped domain.

    Points are ``center + rho * (gamma(t) - center)`` with Jacobian
    ``rho * cross(gamma - center, gamma')``.  Returns ``(nodes, weights)``.
    """
    if n_angular is None:
        n_angular = domain.M
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.5 * (xg + 1.0)
    wr = 0.5 * wg
    p = resample_periodic(domain.points - domain.center, n_angular)
    p1 = resample_periodic(domain.d1, n_angular)
    jac = _cross(p, p1) / n_angular
    nodes = domain.center + rho[:, None, None] * p[None, :, :]
    weights = (wr * rho)[:, None] * jac[None, :]
    return nodes.reshape(-1, 2), weights.reshape(-1)


def supporting_function(K, xi) -> float:
    """sup over the finite set ``K`` of ``x . xi``."""
    K = as_points(K)
    if len(K) == 0:
        raise ValueError("K must be nonempty")
    return float(np.max(K @ np.asarray(xi, dtype=float)))


# ---------------------------------------------------------------------------
# inversion normalization
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ConformalNormalization:
    """Inversion in the circle ``|x - a| = r`` followed by the similarity that
    sends ``x0`` to the origin, the ball ``B(a, r)`` to ``B(-e1, 1)``.
    """

    a: np.ndarray
    r: float
    x0: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        for name in ("a", "x0", "rotation"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not self.r > 0:
            raise ValueError("inversion radius must be positive")

    def _reject_center(self, pts):
        d = np.hypot(pts[:, 0] - self.a[0], pts[:, 1] - self.a[1])
        if np.any(d < 1e-12 * max(self.r, 1.0)):
            raise ValueError(f"evaluation requested at the inversion center {tuple(self.a)}")
        return d

    def psi(self, points) -> np.ndarray:
        pts = as_points(points)
        d = self._reject_center(pts)
        return self.a + (pts - self.a) * (self.r**2 / d**2)[:, None]

    def weight(self, points) -> np.ndarray:
        """Jacobian determinant ``r^4 |x - a|^-4`` of the inversion."""
        pts = as_points(points)
        d = self._reject_center(pts)
        return self.r**4 / d**4

    def forward(self, points) -> np.ndarray:
        """Original coordinates -> normalized image coordinates."""
        return (self.psi(points) - self.x0) @ self.rotation.T / self.r

    def inverse(self, points) -> np.ndarray:
        pts = as_points(points)
        return self.psi(self.x0 + self.r * pts @ self.rotation)

    def forward_jacobian(self, points) -> np.ndarray:
        """``D(forward)`` at each point, shape ``(N, 2, 2)``."""
        pts = as_points(points)
        d = self._reject_center(pts)
        n = (pts - self.a) / d[:, None]
        refl = np.eye(2)[None] - 2.0 * n[:, :, None] * n[:, None, :]
        dpsi = (self.r**2 / d**2)[:, None, None] * refl
        return np.einsum("ij,njk->nik", self.rotation, dpsi) / self.r


def _rotation_to_minus_e1(nu) -> np.ndarray:
    # rotation R with R @ nu = (-1, 0)
    c, s = -nu[0], nu[1]
    return np.array([[c, -s], [s, c]])


def normalize_at(
    domain: Domain2D,
    x0,
    radius: Optional[float] = None,
    clearance: float = 1e-6,
    n_radii: int = 24,
):
    """Invert ``domain`` in a ball touching it only at the boundary point ``x0``.

    The ball ``B(a, r)`` sits on the outward normal at ``x0``.  Without an
    explicit ``radius`` the search runs over a geometric grid from the
    curvature radius at ``x0`` down to a tenth of it and keeps the largest
    admissible ``r``.  Admissibility is measured by the normalized clearance
    ``(|x-a|^2 - r^2) / |x - x0|^2`` over a refined boundary sampling.

    Returns the normalized image domain (x0 at the origin, tangent line
    ``x1 = 0``, contained in ``|x + e1| < 1``) and the normalization.
    """
    if np.isscalar(x0) and float(x0).is_integer():
        j0 = int(x0)
    else:
        x0 = np.asarray(x0, dtype=float)
        dist = np.hypot(*(domain.points - x0).T)
        j0 = int(np.argmin(dist))
        if dist[j0] > 1e-9 * max(1.0, domain.diameter):
            raise ValueError(f"x0={tuple(x0)} is not a boundary node (distance {dist[j0]:.3e})")
    p0 = domain.points[j0]
    nu = domain.normal[j0]
    kappa = float(domain.curvature[j0])

    fine = domain.resampled(4 * domain.M).points
    rel = fine - p0
    d2 = np.einsum("ij,ij->i", rel, rel)
    keep = d2 > (1e-9 * domain.diameter) ** 2

    def ratio(r):
        return float(np.min(1.0 - 2.0 * r * (rel[keep] @ nu) / d2[keep]))

    if radius is not None:
        radii = [float(radius)]
    else:
        r0 = 1.0 / abs(kappa) if abs(kappa) > 1e-12 else domain.diameter
        radii = list(r0 * np.geomspace(1.0, 0.1, n_radii))
    best = -np.inf
    chosen = None
    for r in radii:
        q = ratio(r)
        best = max(best, q)
        if q >= clearance:
            chosen = r
            break
    if chosen is None:
        raise ValueError(
            f"no admissible inversion ball at x0={tuple(p0)}: best normalized "
            f"clearance {best:.3e} < required {clearance:.1e}"
        )
    a = p0 + chosen * nu
    norm = ConformalNormalization(a, chosen, p0, _rotation_to_minus_e1(nu))
    img = norm.forward(domain.points)
    img_center = norm.forward(domain.center)[0]
    try:
        image = Domain2D.from_samples(img, img_center, label=f"{domain.label}-normalized")
    except ValueError:
        image = Domain2D.from_samples(img, None, label=f"{domain.label}-normalized")
    return image, norm


class KelvinField(HarmonicField):
    """Pull-back ``u o forward`` of a field on the normalized image.

    In two dimensions the Kelvin factor ``r^(n-2) |x-a|^(2-n)`` is 1, so the
    transfer is a plain composition.
    """

    def __init__(self, image_field: HarmonicField, norm: ConformalNormalization, domain=None):
        self.image_field = image_field
        self.norm = norm
        self.domain = domain

    def evaluate(self, points):
        return self.image_field.evaluate(self.norm.forward(points))

    def gradient(self, points):
        pts = as_points(points)
        jac = self.norm.forward_jacobian(pts)
        g = self.image_field.gradient(self.norm.forward(pts))
        return np.einsum("nki,nk->ni", jac, g)


def kelvin_transfer(u: HarmonicField, norm: ConformalNormalization, domain: Optional[Domain2D] = None):
    """Transfer a harmonic field on the normalized image back to the original domain."""
    return KelvinField(u, norm, domain)


def domain_from_config(spec: dict) -> Domain2D:
    spec = dict(spec)
    M = int(spec.pop("M", 256))
    return make_domain(spec, M)


def boundary_nodes_in(domain: Domain2D, intervals: Sequence) -> np.ndarray:
    return BoundaryPartition(tuple(intervals)).gamma_mask(domain)
