"""Harmonic exponentials ``exp(-i x.zeta/h)`` with ``zeta.zeta = 0`` and their
Dirichlet corrections that vanish on the inaccessible boundary part.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import HarmonicField, ZeroField, as_points
from .geometry import Domain2D, interior_quadrature
from .laplace import h1_norm, solve_dirichlet

GAMMA = np.array([1j, 1.0])
GAMMA3 = np.array([1j, 1.0, 0.0])
NULL_TOL = 1e-12
LOG_RANGE_LIMIT = math.log(1e300)


class ResolutionError(ValueError):
    """Boundary nodes too coarse for the oscillation of the data."""


class DynamicRangeError(ValueError):
    """Boundary data spans more than the double-precision budget."""


class DecompositionError(RuntimeError):
    """Newton iteration for a null decomposition did not converge."""


def null_residual(zeta) -> float:
    """``|zeta.zeta| / |zeta|^2`` (0 for the zero vector)."""
    zeta = np.asarray(zeta, dtype=complex)
    nrm = float(np.sum(np.abs(zeta) ** 2))
    return 0.0 if nrm == 0 else float(abs(np.sum(zeta * zeta)) / nrm)


@dataclass(frozen=True)
class NullVector:
    """Complex vector on the characteristic variety ``zeta.zeta = 0``."""

    zeta: np.ndarray

    def __post_init__(self):
        z = np.array(self.zeta, dtype=complex).reshape(-1)
        if z.size not in (2, 3):
            raise ValueError("null vectors live in C^2 or C^3")
        res = null_residual(z)
        if res > NULL_TOL:
            raise ValueError(f"|zeta.zeta| / |zeta|^2 = {res:.3e} exceeds {NULL_TOL:g}")
        z.setflags(write=False)
        object.__setattr__(self, "zeta", z)

    @property
    def n(self) -> int:
        return self.zeta.size

    @property
    def residual(self) -> float:
        return null_residual(self.zeta)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.zeta, dtype=dtype)

    def __add__(self, other):
        return np.asarray(self) + np.asarray(other)

    def __mul__(self, alpha):
        return NullVector(self.zeta * alpha)

    __rmul__ = __mul__


def gamma(a: complex = 1.0, n: int = 2) -> NullVector:
    return NullVector(a * (GAMMA if n == 2 else GAMMA3))


# ---------------------------------------------------------------------------
# decompositions
# ---------------------------------------------------------------------------
def null_decompose_2d(z) -> tuple:
    """Split ``z`` in the basis ``(gamma, conj(gamma))`` of C^2."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (2,):
        raise ValueError("null_decompose_2d expects a vector in C^2")
    alpha = (z[1] - 1j * z[0]) / 2
    beta = (z[1] + 1j * z[0]) / 2
    return NullVector(alpha * GAMMA), NullVector(beta * np.conj(GAMMA))


def _newton_3d(z, a, maxiter=50):
    zeta = a * GAMMA3.astype(complex)
    scale = max(abs(a), 1.0) ** 2
    for it in range(maxiter + 1):
        eta = z - zeta
        F = np.array([zeta @ zeta, eta @ eta])
        if np.max(np.abs(F)) <= 1e-14 * scale:
            return zeta, it
        if it == maxiter:
            break
        J = np.vstack([2 * zeta, -2 * eta])
        zeta = zeta - np.linalg.pinv(J) @ F
    raise DecompositionError(
        f"Newton did not converge in {maxiter} steps (residual {np.max(np.abs(F)):.3e}); "
        "z is outside the decomposition neighbourhood"
    )


def null_decompose_near(z, a: float, eps_max: Optional[float] = None) -> tuple:
    """Decompose ``z`` near ``2 i a e1`` as ``zeta + eta`` with ``zeta`` near
    ``a gamma`` and ``eta`` near ``-a conj(gamma)``.

    Returns ``(zeta, eta, c_meas)`` where ``c_meas`` is
    ``max(|zeta - a gamma|, |eta + a conj(gamma)|) / (eps a)`` for the
    measured ``eps = |z - 2 i a e1| / (2a)`` (0 when ``z`` is the centre).
    """
    z = np.asarray(z, dtype=complex).reshape(-1)
    n = z.size
    if n not in (2, 3):
        raise ValueError("only n = 2 or n = 3 is supported")
    if a <= 0:
        raise ValueError("scale a must be positive")
    centre = np.zeros(n, dtype=complex)
    centre[0] = 2j * a
    eps = float(np.linalg.norm(z - centre)) / (2 * a)
    if eps_max is not None and eps >= eps_max:
        raise ValueError(f"|z - 2ia e1| / 2a = {eps:.4g} is not below eps_max = {eps_max:g}")
    g = GAMMA if n == 2 else GAMMA3
    if n == 2:
        zeta, eta = null_decompose_2d(z)
    else:
        zv, _ = _newton_3d(z, a)
        if max(null_residual(zv), null_residual(z - zv)) > NULL_TOL:
            raise DecompositionError("Newton converged to a degenerate split; z is too far from 2ia e1")
        zeta, eta = NullVector(zv), NullVector(z - zv)
    dist = max(np.linalg.norm(zeta.zeta - a * g), np.linalg.norm(eta.zeta + a * np.conj(g)))
    c_meas = 0.0 if eps == 0 else float(dist / (eps * a))
    return zeta, eta, c_meas


def decomposition_constant(n: int = 2, a: float = 1.0, eps: float = 0.05,
                           samples: int = 400, rng=None) -> float:
    """Measured constant ``C`` with ``|zeta - a gamma| < C eps a`` on the ball
    ``|z - 2 i a e1| < 2 eps a``.

    In 2D the decomposition is linear and the value is the exact operator
    bound; in 3D it is the maximum over random points on the sphere.
    """
    if n == 2:
        # zeta - a gamma = ((dz2 - i dz1)/2) gamma, eta + a conj(gamma) similarly
        row = np.array([-0.5j, 0.5]) * np.linalg.norm(GAMMA)
        return float(2.0 * np.linalg.norm(row))
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(samples):
        d = rng.normal(size=n) + 1j * rng.normal(size=n)
        d *= 2 * eps * a * (1 - 1e-9) / np.linalg.norm(d)
        z = d.copy()
        z[0] += 2j * a
        _, _, c = null_decompose_near(z, a)
        worst = max(worst, c)
    return worst


# ---------------------------------------------------------------------------
# cutoff and corrected exponentials
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CutoffSpec:
    """Quintic smoothstep in ``x1``: 1 for ``x1 <= -2c``, 0 for ``x1 >= -c``."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("clearance c must be positive")

    def profile(self, x1) -> np.ndarray:
        s = np.clip((-self.c - np.asarray(x1, dtype=float)) / self.c, 0.0, 1.0)
        return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)

    def __call__(self, points) -> np.ndarray:
        return self.profile(as_points(points)[:, 0])

    def gamma_mask(self, domain: Domain2D) -> np.ndarray:
        """Boundary nodes of the inaccessible part, where the profile is 1."""
        return domain.points[:, 0] <= -2.0 * self.c


def plane_wave(points, zeta, h) -> np.ndarray:
    pts = as_points(points)
    zeta = np.asarray(zeta, dtype=complex)
    return np.exp(-1j * (pts @ zeta) / h)


class _PlaneWave(HarmonicField):
    def __init__(self, domain, zeta, h):
        self.domain, self.zeta, self.h = domain, np.asarray(zeta, dtype=complex), h

    def evaluate(self, points):
        return plane_wave(points, self.zeta, self.h)

    def gradient(self, points):
        return (-1j / self.h) * self.evaluate(points)[:, None] * self.zeta[None, :]

    def log_abs(self, points):
        return as_points(points) @ self.zeta.imag / self.h


class CorrectedExponential(HarmonicField):
    """``u = exp(-i x.zeta/h) + w`` with ``w`` the harmonic correction."""

    def __init__(self, domain, zeta: NullVector, h: float, chi: CutoffSpec, w: HarmonicField):
        self.domain = domain
        self.zeta = zeta
        self.h = h
        self.chi = chi
        self.w = w
        self.exponential = _PlaneWave(domain, zeta.zeta, h)

    def evaluate(self, points):
        return self.exponential.evaluate(points) + self.w.evaluate(points)

    def gradient(self, points):
        return self.exponential.gradient(points) + self.w.gradient(points)

    @property
    def trace(self):
        return self.exponential.evaluate(self.domain.points) + self.w.trace

    def normal_derivative(self):
        g = self.exponential.gradient(self.domain.points)
        return np.einsum("ij,ij->i", g, self.domain.normal) + self.w.normal_derivative()

    def gamma_residual(self) -> float:
        """Max ``|u|`` over boundary nodes where the cutoff equals 1."""
        mask = self.chi.gamma_mask(self.domain)
        if not mask.any():
            return 0.0
        return float(np.max(np.abs(self.trace[mask])))


def check_resolution(domain: Domain2D, zeta, h: float, nodes_per_wavelength: int = 10) -> None:
    re = float(np.linalg.norm(np.real(np.asarray(zeta, dtype=complex))))
    if re == 0:
        return
    wavelength = h / re
    spacing = float(np.max(domain.speed) / domain.M)
    if spacing > wavelength / nodes_per_wavelength:
        need = int(math.ceil(domain.M * spacing * nodes_per_wavelength / wavelength))
        raise ResolutionError(
            f"boundary spacing {spacing:.3e} exceeds 1/{nodes_per_wavelength} of the "
            f"oscillation length h/|Re zeta| = {wavelength:.3e}; use at least M = {need}"
        )


def build_corrected_exponential(domain: Domain2D, zeta, h: float, chi: CutoffSpec,
                                nodes_per_wavelength: int = 10) -> CorrectedExponential:
    if not isinstance(zeta, NullVector):
        zeta = NullVector(zeta)
    if zeta.n != 2:
        raise ValueError("corrected exponentials are built on planar domains (n = 2)")
    if zeta.zeta[0].imag < 0:
        raise ValueError("Im zeta_1 must be non-negative")
    if not 0 < h <= 1:
        raise ValueError(f"h must lie in (0, 1], got {h}")
    check_resolution(domain, zeta.zeta, h, nodes_per_wavelength)
    x = domain.points
    cut = chi(x)
    active = cut > 0
    if not active.any():
        return CorrectedExponential(domain, zeta, h, chi, ZeroField(domain))
    logs = x[active] @ zeta.zeta.imag / h
    span = max(float(logs.max()), float(logs.max() - logs.min()))
    if span > LOG_RANGE_LIMIT:
        raise DynamicRangeError(
            f"boundary data spans e^{span:.1f} > 1e300; increase h or reduce |zeta|/h"
        )
    data = np.zeros(domain.M, dtype=complex)
    data[active] = -plane_wave(x[active], zeta.zeta, h) * cut[active]
    w = solve_dirichlet(domain, data)
    return CorrectedExponential(domain, zeta, h, chi, w)


def corrected_exponential_values(domain: Domain2D, zetas, h: float, chi: CutoffSpec, points,
                                 nodes_per_wavelength: int = 10):
    """Values of ``exp(-i x.zeta/h) + w`` at interior ``points`` for every row
    of ``zetas`` (K, 2), sharing one factorization; returns (P, K)."""
    from .laplace import get_solver

    Z = np.asarray(zetas, dtype=complex).reshape(-1, 2)
    for z in Z:
        if null_residual(z) > NULL_TOL:
            raise ValueError("every frequency must be a null vector")
        if z[0].imag < 0:
            raise ValueError("Im zeta_1 must be non-negative")
        check_resolution(domain, z, h, nodes_per_wavelength)
    x = domain.points
    cut = chi(x)
    active = cut > 0
    logs = x[active] @ Z.imag.T / h
    if logs.size and max(float(logs.max()), float((logs.max(0) - logs.min(0)).max())) > LOG_RANGE_LIMIT:
        raise DynamicRangeError("boundary data spans more than 1e300; increase h or reduce |zeta|/h")
    data = -np.exp(-1j * (x @ Z.T) / h) * cut[:, None]
    pts = as_points(points)
    return np.exp(-1j * (pts @ Z.T) / h) + get_solver(domain).evaluate_many(data, pts)


# ---------------------------------------------------------------------------
# decay report
# ---------------------------------------------------------------------------
@dataclass
class DecayReport:
    h_list: list
    log_norms: list
    fitted_slope: float
    bound_slope: float
    slope_tol: float
    fit_residual: float
    status: str = "ok"  # "ok", "inconclusive" or "exact zero"
    passed: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=float)


def fit_slope(h_list, log_values):
    """Least-squares slope of ``log_values`` against ``1/h`` and the max residual."""
    x = 1.0 / np.asarray(h_list, dtype=float)
    y = np.asarray(log_values, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ coef - y)))
    return float(coef[0]), resid


def validate_h_list(h_list, minimum: int = 3):
    h = [float(v) for v in h_list]
    if len(h) < minimum:
        raise ValueError(f"h_list needs at least {minimum} values")
    if any(not 0 < v <= 1 for v in h):
        raise ValueError("h_list entries must lie in (0, 1]")
    if any(b >= a for a, b in zip(h, h[1:])):
        raise ValueError("h_list must be strictly decreasing")
    return h


def verify_w_bound(domain: Domain2D, zeta_ray, chi: CutoffSpec, h_list: Sequence[float],
                   slope_tol: float = 0.05, fit_tol: float = 0.25,
                   n_radial: int = 64) -> DecayReport:
    """Fit ``log ||w||_H1`` against ``1/h`` and compare with the exponent
    ``-c Im zeta_1 + |Im zeta'|`` of the correction bound."""
    h_list = validate_h_list(h_list)
    zeta = zeta_ray if isinstance(zeta_ray, NullVector) else NullVector(zeta_ray)
    if not zeta.zeta[0].imag > 0:
        raise ValueError("Im zeta_1 must be positive along the ray")
    bound = -chi.c * zeta.zeta[0].imag + float(np.linalg.norm(zeta.zeta[1:].imag))
    quad = interior_quadrature(domain, n_radial)
    logs = []
    for h in h_list:
        u = build_corrected_exponential(domain, zeta, h, chi)
        if isinstance(u.w, ZeroField):
            logs.append(-math.inf)
        else:
            logs.append(math.log(h1_norm(u.w, quadrature=quad)))
    if all(v == -math.inf for v in logs):
        return DecayReport(h_list, logs, -math.inf, bound, slope_tol, 0.0, "exact zero", True)
    slope, resid = fit_slope(h_list, logs)
    status = "ok" if resid <= fit_tol else "inconclusive"
    ok = status == "ok" and slope <= bound + slope_tol
    return DecayReport(h_list, logs, slope, bound, slope_tol, resid, status, ok)
