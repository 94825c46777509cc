"""Dirichlet problems for the Laplacian by a second-kind double-layer
equation, Green's kernels, and field norms.

The double-layer potential with real density ``mu`` is the real part of the
Cauchy integral ``(1/2 pi i) oint mu(y) / (y - x) dy``.  Interior values and
gradients are evaluated with the barycentric form of that Cauchy integral,
which stays spectrally accurate up to the boundary.  Complex densities are
handled as two real densities.

Multiply connected regions (an outer curve with holes) use the double layer
augmented by one logarithmic source per hole and a zero-mean constraint on
each hole's density.
"""

from __future__ import annotations

import csv
import warnings
import weakref
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack
from scipy.spatial import cKDTree

from .fields import HarmonicField, as_points
from .geometry import Domain2D, interior_quadrature, spectral_derivative

COND_LIMIT = 1e10
_CHUNK = 128  # rows per evaluation block; small blocks stay in cache


class ConditioningError(RuntimeError):
    """Raised when the discretized boundary operator is too ill-conditioned."""

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class GreenAccuracyWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# boundaries
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class MultiplyConnectedDomain:
    """Outer counterclockwise curve with interior holes.

    Hole curves are given counterclockwise around their own ``center`` (a
    point inside the hole); they are traversed clockwise internally so the
    region lies to the left of every component.
    """

    outer: Domain2D
    holes: tuple

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        for hole in self.holes:
            if not np.all(self.outer.contains(hole.points)):
                raise ValueError("every hole must lie inside the outer curve")

    def _components(self):
        comps = [(self.outer.points, self.outer.d1, self.outer.d2)]
        for hole in self.holes:
            comps.append(
                (
                    np.roll(hole.points[::-1], 1, axis=0),
                    -np.roll(hole.d1[::-1], 1, axis=0),
                    np.roll(hole.d2[::-1], 1, axis=0),
                )
            )
        return comps

    @property
    def points(self):
        return np.concatenate([c[0] for c in self._components()])

    @property
    def normal(self):
        d1 = np.concatenate([c[1] for c in self._components()])
        tau = d1 / np.hypot(d1[:, 0], d1[:, 1])[:, None]
        return np.column_stack([tau[:, 1], -tau[:, 0]])

    @property
    def M(self):
        return self.outer.M + sum(h.M for h in self.holes)

    def contains(self, points):
        inside = self.outer.contains(points)
        for hole in self.holes:
            inside &= ~hole.contains(points)
        return inside


class _BoundaryData:
    """Flattened node data for one or several closed components."""

    def __init__(self, domain):
        if isinstance(domain, Domain2D):
            comps = [(domain.points, domain.d1, domain.d2)]
            centers = []
        elif isinstance(domain, MultiplyConnectedDomain):
            comps = domain._components()
            centers = [h.center for h in domain.holes]
        else:
            raise TypeError(f"unsupported domain type {type(domain).__name__}")
        self.slices = []
        start = 0
        for pts, _, _ in comps:
            self.slices.append(slice(start, start + len(pts)))
            start += len(pts)
        pts = np.concatenate([c[0] for c in comps])
        d1 = np.concatenate([c[1] for c in comps])
        d2 = np.concatenate([c[2] for c in comps])
        self.points = pts
        self._tree = None
        self.z = pts[:, 0] + 1j * pts[:, 1]
        self.dz = d1[:, 0] + 1j * d1[:, 1]
        self.hstep = np.concatenate([np.full(len(c[0]), 1.0 / len(c[0])) for c in comps])
        self.speed = np.abs(self.dz)
        self.curvature = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / self.speed**3
        self.arc_weights = self.speed * self.hstep
        self.cweights = self.dz * self.hstep
        tau = d1 / self.speed[:, None]
        self.normal = np.column_stack([tau[:, 1], -tau[:, 0]])
        self.hole_centers = np.array([c[0] + 1j * c[1] for c in centers], dtype=complex)
        self.N = len(self.z)
        self.spacing = float(max(np.sum(self.arc_weights[s]) / (s.stop - s.start) for s in self.slices))

    @property
    def cauchy_matrix(self):
        if getattr(self, "_cmat", None) is None:
            diff = self.z[None, :] - self.z[:, None]
            np.fill_diagonal(diff, 1.0)
            C = self.cweights[None, :] / diff
            np.fill_diagonal(C, 0.0)
            self._cmat = C
        return self._cmat

    def holomorphic_trace(self, dens):
        """Interior boundary values of the Cauchy integral of real density
        columns ``dens`` (N, k)."""
        C = self.cauchy_matrix
        dmu = self.tangential_derivative(dens)
        cross = C @ dens - C.sum(axis=1)[:, None] * dens
        return dens + (cross + dmu * self.hstep[:, None]) / (2j * np.pi)

    def tangential_derivative(self, values):
        """d/dt of boundary samples, componentwise."""
        out = np.empty_like(values)
        for s in self.slices:
            out[s] = spectral_derivative(values[s], 1)
        return out


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------
class LaplaceSolver:
    """Factorized double-layer Nystrom system for one boundary."""

    def __init__(self, domain, cond_limit: float = COND_LIMIT):
        self.domain = domain
        self.bd = bd = _BoundaryData(domain)
        N, m = bd.N, len(bd.hole_centers)
        diff = bd.z[None, :] - bd.z[:, None]
        np.fill_diagonal(diff, 1.0)
        K = np.real(bd.cweights[None, :] / (2j * np.pi * diff))
        np.fill_diagonal(K, bd.curvature * bd.arc_weights / (4.0 * np.pi))
        A = 0.5 * np.eye(N) + K
        if m:
            logs = np.log(np.abs(bd.z[:, None] - bd.hole_centers[None, :]))
            cons = np.zeros((m, N))
            for k in range(m):
                s = bd.slices[k + 1]
                cons[k, s] = bd.arc_weights[s]
            A = np.block([[A, logs], [cons, np.zeros((m, m))]])
        self.matrix = A
        self.lu = la.lu_factor(A, check_finite=True)
        anorm = np.linalg.norm(A, 1)
        rcond, _ = lapack.dgecon(self.lu[0], anorm, norm="1")
        self.condition = float(np.inf if rcond == 0 else 1.0 / rcond)
        if self.condition > cond_limit:
            raise ConditioningError(
                f"boundary system condition estimate {self.condition:.3e} exceeds "
                f"{cond_limit:.1e}; the boundary is under-resolved",
                self.condition,
            )

    def solve_density(self, g: np.ndarray) -> np.ndarray:
        """Density (and hole coefficients) for boundary data ``g``.

        ``g`` may be complex and may carry several right-hand sides as columns.
        """
        g = np.asarray(g)
        single = g.ndim == 1
        G = g.reshape(self.bd.N, -1)
        m = len(self.bd.hole_centers)
        rhs = np.vstack([G, np.zeros((m, G.shape[1]), dtype=G.dtype)])
        if np.iscomplexobj(rhs):
            sol = la.lu_solve(self.lu, rhs.real) + 1j * la.lu_solve(self.lu, rhs.imag)
        else:
            sol = la.lu_solve(self.lu, rhs)
        return sol[:, 0] if single else sol

    def evaluate_many(self, data, points) -> np.ndarray:
        """Values at interior ``points`` of the harmonic extensions of each
        column of ``data`` (N, K); returns (P, K).  Single-component
        boundaries only."""
        if len(self.bd.hole_centers):
            raise NotImplementedError("batched evaluation supports simply connected domains")
        data = np.asarray(data).reshape(self.bd.N, -1)
        dens = self.solve_density(data)
        vre = self.bd.holomorphic_trace(np.ascontiguousarray(dens.real))
        vim = self.bd.holomorphic_trace(np.ascontiguousarray(dens.imag))
        pts = as_points(points)
        out = np.empty((len(pts), data.shape[1]), dtype=complex)
        for start in range(0, len(pts), _CHUNK):
            xz = pts[start:start + _CHUNK, 0] + 1j * pts[start:start + _CHUNK, 1]
            c = self.bd.cweights[None, :] / (self.bd.z[None, :] - xz[:, None])
            c /= c.sum(axis=1)[:, None]
            out[start:start + _CHUNK] = (c @ vre).real + 1j * (c @ vim).real
        return out

    def solve(self, g) -> "LayerField":
        g = np.asarray(g, dtype=complex)
        if g.shape != (self.bd.N,):
            raise ValueError(f"boundary data needs {self.bd.N} samples, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("boundary data must be finite")
        sol = self.solve_density(g)
        return LayerField(self, sol[: self.bd.N], sol[self.bd.N:])


_SOLVERS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def get_solver(domain) -> LaplaceSolver:
    solver = _SOLVERS.get(domain)
    if solver is None:
        solver = LaplaceSolver(domain)
        _SOLVERS[domain] = solver
    return solver


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------
def _cauchy_parts(bd: _BoundaryData, x: np.ndarray, vb: np.ndarray, with_grad: bool):
    """Barycentric Cauchy formula for holomorphic functions with boundary
    values ``vb`` (N, k).

    Returns ``v`` (P, k) and optionally ``v'`` (P, k).
    """
    diff = bd.z[None, :] - x[:, None]
    c = bd.cweights[None, :] / diff
    S = c.sum(axis=1)
    v = (c @ vb) / S[:, None]
    if not with_grad:
        return v, None
    c2 = c / diff
    dv = (c2 @ vb - (c2.sum(axis=1))[:, None] * v) / S[:, None]
    return v, dv


class LayerField(HarmonicField):
    """Harmonic field represented by a double-layer density (plus hole logs)."""

    def __init__(self, solver: LaplaceSolver, density, log_coeffs=()):
        self.solver = solver
        self.domain = solver.domain
        self.density = np.asarray(density, dtype=complex)
        self.log_coeffs = np.asarray(log_coeffs, dtype=complex)
        self._trace = None
        self._holo = None

    @property
    def holomorphic_trace(self):
        if self._holo is None:
            dens = np.column_stack([self.density.real, self.density.imag])
            self._holo = self.solver.bd.holomorphic_trace(dens)
        return self._holo

    @property
    def boundary_density(self):
        return self.density

    @property
    def trace(self) -> np.ndarray:
        if self._trace is None:
            bd = self.solver.bd
            full = np.concatenate([self.density, self.log_coeffs])
            self._trace = (self.solver.matrix[: bd.N] @ full.real) + 1j * (
                self.solver.matrix[: bd.N] @ full.imag
            )
        return self._trace

    def _node_hits(self, pts):
        bd = self.solver.bd
        scale = max(1.0, float(np.max(np.abs(bd.z))))
        if bd._tree is None:
            bd._tree = cKDTree(bd.points)
        d, j = bd._tree.query(pts)
        return np.where(d < 1e-13 * scale, j, -1)

    def _log_terms(self, xz, grad):
        bd = self.solver.bd
        if not len(bd.hole_centers):
            return 0.0
        d = xz[:, None] - bd.hole_centers[None, :]
        if not grad:
            return np.log(np.abs(d)) @ self.log_coeffs
        g = d / np.abs(d) ** 2  # x-component real part, y-component imag part
        return np.column_stack([g.real @ self.log_coeffs, g.imag @ self.log_coeffs])

    def evaluate(self, points) -> np.ndarray:
        pts = as_points(points)
        bd = self.solver.bd
        out = np.empty(len(pts), dtype=complex)
        hits = self._node_hits(pts)
        dens = self.holomorphic_trace
        for start in range(0, len(pts), _CHUNK):
            sl = slice(start, start + _CHUNK)
            xz = pts[sl, 0] + 1j * pts[sl, 1]
            h = hits[sl]
            free = h < 0
            vals = np.empty(len(xz), dtype=complex)
            if np.any(free):
                v, _ = _cauchy_parts(bd, xz[free], dens, False)
                vals[free] = v[:, 0].real + 1j * v[:, 1].real + self._log_terms(xz[free], False)
            if np.any(~free):
                vals[~free] = self.trace[h[~free]]
            out[sl] = vals
        return out

    def gradient(self, points) -> np.ndarray:
        pts = as_points(points)
        bd = self.solver.bd
        hits = self._node_hits(pts)
        out = np.empty((len(pts), 2), dtype=complex)
        dens = self.holomorphic_trace
        nbound = None
        for start in range(0, len(pts), _CHUNK):
            sl = slice(start, start + _CHUNK)
            xz = pts[sl, 0] + 1j * pts[sl, 1]
            h = hits[sl]
            free = h < 0
            g = np.empty((len(xz), 2), dtype=complex)
            if np.any(free):
                _, dv = _cauchy_parts(bd, xz[free], dens, True)
                gre = np.column_stack([dv[:, 0].real, -dv[:, 0].imag])
                gim = np.column_stack([dv[:, 1].real, -dv[:, 1].imag])
                g[free] = gre + 1j * gim + self._log_terms(xz[free], True)
            if np.any(~free):
                if nbound is None:
                    nbound = self.boundary_gradient()
                g[~free] = nbound[h[~free]]
            out[sl] = g
        return out

    def boundary_gradient(self) -> np.ndarray:
        """Gradient at the boundary nodes from the boundary values of the
        holomorphic Cauchy integral, differentiated along the curve."""
        bd = self.solver.bd
        dvdz = bd.tangential_derivative(self.holomorphic_trace) / bd.dz[:, None]
        gre = np.column_stack([dvdz[:, 0].real, -dvdz[:, 0].imag])
        gim = np.column_stack([dvdz[:, 1].real, -dvdz[:, 1].imag])
        g = gre + 1j * gim
        return g + self._log_terms(bd.z, True)

    def normal_derivative(self) -> np.ndarray:
        g = self.boundary_gradient()
        return np.einsum("ij,ij->i", g, self.solver.bd.normal)


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    domain: object
    g: np.ndarray

    def __post_init__(self):
        g = self.g
        if callable(g):
            g = g(self.domain.points)
        g = np.asarray(g, dtype=complex)
        if g.shape != (self.domain.M,):
            raise ValueError(f"boundary data needs {self.domain.M} samples, got {g.shape}")
        object.__setattr__(self, "g", g)


def solve_dirichlet(problem: Union[DirichletProblem, object], g=None) -> LayerField:
    """Solve ``Delta u = 0``, ``u = g`` on the boundary.

    Accepts a :class:`DirichletProblem` or ``(domain, g)``.
    """
    if not isinstance(problem, DirichletProblem):
        problem = DirichletProblem(problem, g)
    return get_solver(problem.domain).solve(problem.g)


def spectral_tail(g: np.ndarray) -> float:
    """Relative size of the top quarter of the boundary data's spectrum."""
    G = np.abs(np.fft.fft(np.asarray(g)))
    M = len(G)
    k = np.abs(np.fft.fftfreq(M, 1.0 / M))
    peak = G.max()
    if peak == 0:
        return 0.0
    return float(G[k >= M / 4].max() / peak)


# ---------------------------------------------------------------------------
# Green's kernel
# ---------------------------------------------------------------------------
class GreenKernel:
    """Dirichlet Green's function ``G(x, y) = -(1/2 pi) log|x - y| + h(x, y)``,
    with ``h(x, .)`` the harmonic corrector that cancels the logarithm on the
    boundary.
    """

    def __init__(self, domain: Domain2D):
        self.domain = domain
        self.solver = get_solver(domain)
        self.bd = self.solver.bd

    def near_boundary(self, points) -> np.ndarray:
        if self.bd._tree is None:
            self.bd._tree = cKDTree(self.bd.points)
        d, _ = self.bd._tree.query(as_points(points))
        return d < 2.0 * self.bd.spacing

    def _warn(self, *arrays):
        flags = np.zeros(0, dtype=bool)
        for arr in arrays:
            flags = np.concatenate([flags, self.near_boundary(arr)])
        if flags.any():
            warnings.warn(
                f"{int(flags.sum())} Green-kernel arguments lie within two node "
                "spacings of the boundary; accuracy is degraded",
                GreenAccuracyWarning,
                stacklevel=3,
            )
        return flags

    def corrector_densities(self, sources) -> np.ndarray:
        """Real densities of ``h(x, .)`` for each row of ``sources`` (N, P)."""
        src = as_points(sources)
        sz = src[:, 0] + 1j * src[:, 1]
        data = np.log(np.abs(self.bd.z[:, None] - sz[None, :])) / (2.0 * np.pi)
        return self.solver.solve_density(data)[: self.bd.N]

    def _corrector_at(self, dens, targets):
        tz = targets[:, 0] + 1j * targets[:, 1]
        out = np.empty((len(tz), dens.shape[1]))
        for start in range(0, len(tz), _CHUNK):
            sl = slice(start, start + _CHUNK)
            # rows at boundary nodes are replaced below
            with np.errstate(divide="ignore", invalid="ignore"):
                v, _ = _cauchy_parts(self.bd, tz[sl], dens, False)
            out[sl] = v.real
        # targets on boundary nodes: corrector equals the data exactly
        scale = max(1.0, float(np.max(np.abs(self.bd.z))))
        if self.bd._tree is None:
            self.bd._tree = cKDTree(self.bd.points)
        d, j = self.bd._tree.query(targets)
        hit = d < 1e-13 * scale
        out[hit] = dens[j[hit]].real
        return out

    def matrix(self, x, y, warn: bool = True) -> np.ndarray:
        """``G(x_p, y_q)`` for all pairs, shape ``(P, Q)``."""
        x, y = as_points(x), as_points(y)
        if warn:
            self._warn(x, y)
        dens = self.bd.holomorphic_trace(self.corrector_densities(x))
        h = self._corrector_at(dens, y).T
        d = np.hypot(x[:, None, 0] - y[None, :, 0], x[:, None, 1] - y[None, :, 1])
        with np.errstate(divide="ignore"):
            return -np.log(d) / (2.0 * np.pi) + h

    def __call__(self, x, y, warn: bool = True) -> np.ndarray:
        """Elementwise ``G(x_i, y_i)``."""
        x, y = as_points(x), as_points(y)
        if warn:
            self._warn(x, y)
        dens = self.bd.holomorphic_trace(self.corrector_densities(x))
        out = np.empty(len(x))
        for i in range(len(x)):
            out[i] = self._corrector_at(dens[:, i:i + 1], y[i:i + 1])[0, 0]
        d = np.hypot(*(x - y).T)
        with np.errstate(divide="ignore"):
            return -np.log(d) / (2.0 * np.pi) + out


def green_kernel(domain: Domain2D) -> GreenKernel:
    return GreenKernel(domain)


# ---------------------------------------------------------------------------
# norms and export
# ---------------------------------------------------------------------------
def l2_norm(field: HarmonicField, quadrature=None, n_radial: int = 64, n_angular: Optional[int] = None) -> float:
    nodes, w = quadrature if quadrature is not None else interior_quadrature(field.domain, n_radial, n_angular)
    u = field.evaluate(nodes)
    return float(np.sqrt(np.sum(w * np.abs(u) ** 2)))


def h1_norm(field: HarmonicField, quadrature=None, n_radial: int = 64, n_angular: Optional[int] = None) -> float:
    """``(int |u|^2 + |grad u|^2)^(1/2)`` on the interior quadrature."""
    nodes, w = quadrature if quadrature is not None else interior_quadrature(field.domain, n_radial, n_angular)
    u = field.evaluate(nodes)
    g = field.gradient(nodes)
    dens = np.abs(u) ** 2 + np.sum(np.abs(g) ** 2, axis=1)
    return float(np.sqrt(np.sum(w * dens)))


def field_to_csv(field: HarmonicField, points, path) -> None:
    pts = as_points(points)
    vals = field.evaluate(pts)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "re_u", "im_u"])
        for p, v in zip(pts, vals):
            writer.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(v.real)), repr(float(v.imag))])
