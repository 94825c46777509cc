"""Approximation of harmonic functions on a subdomain by superpositions of
Dirichlet Green kernels of a larger domain with poles outside the subdomain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as la

from .fields import FunctionField, HarmonicField, as_points
from .geometry import Domain2D, interior_quadrature
from .laplace import GreenKernel, solve_dirichlet


class RungeBreakdown(RuntimeError):
    pass


def curve_distance(domain: Domain2D, points, iters: int = 8) -> np.ndarray:
    """Distance from ``points`` to the trigonometric interpolant of the
    boundary, by Newton projection from the nearest node."""
    pts = as_points(points)
    M = domain.M
    coef = np.fft.fft(domain.z) / M
    k = np.fft.fftfreq(M, d=1.0 / M)
    if M % 2 == 0:
        coef[M // 2] = 0.0
    t = domain.t[np.argmin(np.abs(domain.z[None, :] - (pts[:, 0] + 1j * pts[:, 1])[:, None]), axis=1)]
    p = pts[:, 0] + 1j * pts[:, 1]
    for _ in range(iters):
        e = np.exp(2j * np.pi * np.outer(t, k))
        g = e @ coef
        g1 = e @ (2j * np.pi * k * coef)
        g2 = e @ ((2j * np.pi * k) ** 2 * coef)
        f = np.real((g - p) * np.conj(g1))
        df = np.abs(g1) ** 2 + np.real((g - p) * np.conj(g2))
        t = t - f / np.where(np.abs(df) > 0, df, 1.0)
    e = np.exp(2j * np.pi * np.outer(t, k))
    return np.abs(e @ coef - p)


@dataclass
class NestedPair:
    """``omega1`` inside ``omega2`` with part of their boundaries shared.

    ``sources`` are candidate pole locations in ``omega2`` outside
    ``omega1``, shuffled once so that prefixes form nested source sets.
    """

    omega1: Domain2D
    omega2: Domain2D
    shared_tol: float = 1e-10
    source_margin: float = 0.05
    n_radial: int = 48
    n_angular: Optional[int] = None
    seed: int = 0
    shared: np.ndarray = field(init=False, repr=False)
    sources: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d2 = curve_distance(self.omega2, self.omega1.points)
        self.shared = d2 < self.shared_tol
        # the node polygon of omega2 cuts chords; allow points within the sagitta
        sag = float(np.max(self.omega2.speed)) ** 2 / self.omega2.M**2
        inside = self.omega2.contains(self.omega1.points) | (d2 < sag)
        if not np.all(inside | self.shared):
            raise ValueError("omega1 must lie inside omega2")
        cand, _ = interior_quadrature(self.omega2, 64, 512)
        keep = (~self.omega1.contains(cand)) & (self.omega1.distance_to_boundary(cand) >= self.source_margin)
        keep &= self.omega2.distance_to_boundary(cand) >= self.source_margin
        cand = cand[keep]
        if not len(cand):
            raise ValueError("no source nodes between the two boundaries")
        rng = np.random.default_rng(self.seed)
        self.sources = cand[rng.permutation(len(cand))]

    @property
    def kernel(self) -> GreenKernel:
        if not hasattr(self, "_kernel"):
            self._kernel = GreenKernel(self.omega2)
        return self._kernel

    def quadrature(self):
        if not hasattr(self, "_quad"):
            self._quad = interior_quadrature(self.omega1, self.n_radial, self.n_angular)
        return self._quad

    def shared_intervals(self):
        """Parameter intervals of ``omega1`` where the boundaries touch."""
        t = self.omega1.t
        out, start = [], None
        for i, s in enumerate(self.shared):
            if s and start is None:
                start = t[i]
            if not s and start is not None:
                out.append((float(start), float(t[i - 1])))
                start = None
        if start is not None:
            out.append((float(start), float(t[-1])))
        return out


class GreenSuperposition(HarmonicField):
    """``sum_k a_k G(., y_k)`` restricted to ``omega1``."""

    def __init__(self, pair: NestedPair, amplitudes, sources=None):
        self.pair = pair
        self.domain = pair.omega1
        self.sources = pair.sources[: len(amplitudes)] if sources is None else as_points(sources)
        self.amplitudes = np.asarray(amplitudes, dtype=float)
        if len(self.amplitudes) != len(self.sources):
            raise ValueError("one amplitude per source node")

    def evaluate(self, points):
        pts = as_points(points)
        if not len(self.sources) or not np.any(self.amplitudes):
            return np.zeros(len(pts), dtype=complex)
        G = self.pair.kernel.matrix(self.sources, pts, warn=False)
        return (self.amplitudes @ G).astype(complex)

    def shared_residual(self) -> float:
        nodes = self.pair.omega1.points[self.pair.shared]
        return float(np.max(np.abs(self.evaluate(nodes)))) if len(nodes) else 0.0


def green_superposition(pair: NestedPair, a, sources=None) -> GreenSuperposition:
    return GreenSuperposition(pair, a, sources)


@dataclass
class RungeResult:
    amplitudes: np.ndarray
    l2_error: float
    relative_error: float
    n_sources: int
    lam: float


def design_matrix(pair: NestedPair, n_sources: int) -> np.ndarray:
    """``sqrt(w_q) G(x_q, y_k)`` on the interior quadrature of ``omega1``."""
    nodes, w = pair.quadrature()
    G = pair.kernel.matrix(pair.sources[:n_sources], nodes, warn=False).T
    return np.sqrt(w)[:, None] * G


def _target_vector(pair: NestedPair, target) -> np.ndarray:
    nodes, w = pair.quadrature()
    vals = target(nodes) if callable(target) and not isinstance(target, HarmonicField) else target.evaluate(nodes)
    vals = np.asarray(vals)
    if np.iscomplexobj(vals):
        if np.max(np.abs(vals.imag)) > 1e-12 * max(1.0, np.max(np.abs(vals))):
            raise ValueError("target must be real-valued")
        vals = vals.real
    return np.sqrt(w) * vals


def _solve(A, b, lam):
    if lam == 0:
        x, *_ = la.lstsq(A, b, cond=None, lapack_driver="gelsd")
    else:
        U, s, Vt = la.svd(A, full_matrices=False)
        x = Vt.T @ ((s / (s**2 + lam)) * (U.T @ b))
    if not np.all(np.isfinite(x)):
        raise RungeBreakdown("least-squares solve produced non-finite amplitudes; use lambda > 0")
    return x


def runge_approximate(pair: NestedPair, target, lam: float = 0.0, n_sources: Optional[int] = None,
                      shared_tol: float = 1e-8) -> RungeResult:
    """Minimize ``||sum a_k G(., y_k) - target||^2_{L2(omega1)} + lam ||a||^2``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    n = len(pair.sources) if n_sources is None else int(n_sources)
    if not 0 < n <= len(pair.sources):
        raise ValueError(f"n_sources must lie in 1..{len(pair.sources)}")
    tgt = target if isinstance(target, HarmonicField) else FunctionField(pair.omega1, target)
    on_shared = np.abs(tgt.evaluate(pair.omega1.points[pair.shared])) if pair.shared.any() else np.zeros(1)
    if np.max(on_shared) > shared_tol:
        raise ValueError(f"target does not vanish on the shared boundary (max {np.max(on_shared):.3e})")
    A = design_matrix(pair, n)
    b = _target_vector(pair, tgt)
    return _fit(A, b, lam)


def _fit(A, b, lam) -> RungeResult:
    nb = float(np.linalg.norm(b))
    if nb == 0 and lam > 0:
        return RungeResult(np.zeros(A.shape[1]), 0.0, 0.0, A.shape[1], lam)
    x = _solve(A, b, lam)
    err = float(np.linalg.norm(A @ x - b))
    return RungeResult(x, err, err / nb if nb > 0 else err, A.shape[1], lam)


def convergence_table(pair: NestedPair, target, counts: Sequence[int] = (200, 400, 800),
                      lam: float = 0.0) -> list:
    """``RungeResult`` for each nested prefix of the source list."""
    counts = sorted(int(c) for c in counts)
    tgt = target if isinstance(target, HarmonicField) else FunctionField(pair.omega1, target)
    A = design_matrix(pair, counts[-1])
    b = _target_vector(pair, tgt)
    return [_fit(A[:, :c], b, lam) for c in counts]


def table_to_csv(rows: Sequence[RungeResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_sources", "l2_error", "relative_error", "lambda"])
        for r in rows:
            w.writerow([r.n_sources, f"{r.l2_error:.17g}", f"{r.relative_error:.17g}", f"{r.lam:.17g}"])


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------
def automorphism_target(pole: complex, k: int = 3, domain=None) -> FunctionField:
    """``Re(m^k - m^-k)`` with ``m(z) = (z - p)/(1 - conj(p) z)``.

    It vanishes on the unit circle and is harmonic away from ``p``.
    """
    p = complex(pole)

    def m_and_dm(pts):
        z = pts[:, 0] + 1j * pts[:, 1]
        den = 1 - np.conj(p) * z
        return (z - p) / den, (1 - abs(p) ** 2) / den**2

    def f(pts):
        m, _ = m_and_dm(pts)
        return (m**k - m ** (-k)).real

    def grad(pts):
        m, dm = m_and_dm(pts)
        d = k * (m ** (k - 1) + m ** (-k - 1)) * dm
        return np.column_stack([d.real, -d.imag])

    return FunctionField(domain, f, grad)


# ---------------------------------------------------------------------------
# orthogonality identity
# ---------------------------------------------------------------------------
def newton_corrected_potential(pair: NestedPair, v: Callable, quad=None):
    """``w(y) = int_{omega1} G_{omega2}(x, y) v(x) dx`` as the logarithmic
    potential of ``v`` minus its harmonic correction on ``omega2``.

    Returns callables ``(w, grad_w)`` on point arrays.  ``v`` should vanish
    near the boundary of ``omega1`` so the integrands stay smooth there.
    """
    nodes, wts = pair.quadrature() if quad is None else quad
    vw = wts * np.asarray(v(nodes), dtype=float)
    keep = vw != 0
    xs, vw = nodes[keep], vw[keep]

    def newton(y):
        y = as_points(y)
        d = y[:, None, :] - xs[None, :, :]
        r2 = np.sum(d * d, axis=2)
        val = -(np.log(r2) / (4 * np.pi)) @ vw
        grad = -np.einsum("pqk,q->pk", d / r2[:, :, None], vw) / (2 * np.pi)
        return val, grad

    g2, _ = newton(pair.omega2.points)
    corr = solve_dirichlet(pair.omega2, g2)

    def w(y):
        return newton(y)[0] - corr.evaluate(y).real

    def grad_w(y):
        return newton(y)[1] - corr.gradient(y).real

    return w, grad_w


def verify_orthogonality_identity(pair: NestedPair, v: Callable, u: HarmonicField) -> dict:
    """Both sides of ``int_{omega1} u v = -int_{d omega1} (u dw/dnu - w du/dnu)``
    with ``nu`` the outward normal of ``omega1``.

    The boundary integral runs over all of ``d omega1``; ``shared_part`` is
    the contribution of the shared arc, where both products vanish.
    """
    nodes, wts = pair.quadrature()
    lhs = float(np.sum(wts * np.real(u.evaluate(nodes)) * np.asarray(v(nodes), dtype=float)))
    w, grad_w = newton_corrected_potential(pair, v)
    bpts = pair.omega1.points
    nrm = pair.omega1.normal
    uval = np.real(u.evaluate(bpts))
    du = np.einsum("ij,ij->i", np.real(u.gradient(bpts)), nrm)
    dw = np.einsum("ij,ij->i", grad_w(bpts), nrm)
    integrand = -(uval * dw - w(bpts) * du) * pair.omega1.weights
    rhs = float(np.sum(integrand))
    shared_part = float(np.sum(integrand[pair.shared]))
    scale = max(abs(lhs), abs(rhs))
    return {
        "lhs": lhs,
        "rhs": rhs,
        "shared_part": shared_part,
        "abs_residual": abs(lhs - rhs),
        "relative": abs(lhs - rhs) / scale if scale > 0 else 0.0,
    }


def standard_pair(M1: int = 1024, M2: int = 512, depth: float = 0.3, halfwidth: float = 1.0,
                  seed: int = 0, **kw) -> NestedPair:
    """Unit disc containing the disc indented by a smooth bump around angle 0."""
    from .geometry import make_domain

    o1 = make_domain("indented", M1, radius=1.0, depth=depth, halfwidth=halfwidth)
    o2 = make_domain("circle", M2, radius=1.0)
    return NestedPair(o1, o2, seed=seed, **kw)
