"""Moment data ``int f u v`` for products of corrected exponentials, the
Fourier-decay estimate obtained from their cancellation, and a regularized
reconstruction of ``f`` from partial-data moments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg as la

from .cgo import (
    GAMMA,
    CorrectedExponential,
    CutoffSpec,
    DecayReport,
    NullVector,
    build_corrected_exponential,
    corrected_exponential_values,
    decomposition_constant,
    fit_slope,
    null_decompose_near,
    validate_h_list,
)
from .fields import HarmonicField, as_points
from .geometry import Domain2D, interior_quadrature
from .logcomplex import LogComplex

NORMAL_COND_LIMIT = 1e14


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------
def smooth_bump(points, center, radius, amplitude=1.0) -> np.ndarray:
    """``amplitude * exp(1 - 1/(1 - |x-center|^2/radius^2))`` inside the ball."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    q2 = np.sum((pts - np.asarray(center, dtype=float)) ** 2, axis=1) / radius**2
    out = np.zeros(len(pts))
    m = q2 < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - q2[m]))
    return amplitude * out


def random_smooth_potential(rng, n_terms: int = 3, center=(-1.0, 0.0), spread=0.4) -> Callable:
    """Sum of a few complex Gaussians with random centres and widths."""
    rng = np.random.default_rng(rng)
    cen = np.asarray(center) + spread * rng.uniform(-1, 1, size=(n_terms, 2))
    wid = rng.uniform(0.2, 0.5, size=n_terms)
    amp = rng.normal(size=n_terms) + 1j * rng.normal(size=n_terms)

    def f(points):
        pts = as_points(points)
        d2 = np.sum((pts[:, None, :] - cen[None]) ** 2, axis=2)
        return np.exp(-d2 / (2 * wid**2)) @ amp

    return f


@dataclass(frozen=True, eq=False)
class PotentialGrid:
    """Samples of a bounded potential on quadrature nodes.

    ``half_space`` declares support in ``x1 <= 0``; ``unbounded_value`` marks
    the constant function on all of R^n, for which transforms are closed form.
    """

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    domain: Optional[object] = None
    half_space: bool = False
    unbounded_value: Optional[complex] = None
    label: str = "potential"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if not (len(nodes) == len(w) == len(v)):
            raise ValueError("nodes, weights and values must have equal length")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential values must be finite")
        if self.half_space and np.any((nodes[:, 0] > 1e-14) & (v != 0)):
            raise ValueError("half_space flag set but f is non-zero at nodes with x1 > 0")
        for name, arr in (("nodes", nodes), ("weights", w), ("values", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    @property
    def sup_norm(self) -> float:
        if self.unbounded_value is not None:
            return abs(self.unbounded_value)
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    @property
    def l1_norm(self) -> float:
        if self.unbounded_value is not None:
            return math.inf
        return float(np.sum(self.weights * np.abs(self.values)))

    @property
    def is_zero(self) -> bool:
        if self.unbounded_value is not None:
            return self.unbounded_value == 0
        return not np.any(self.values)

    def scaled(self, alpha) -> "PotentialGrid":
        unb = None if self.unbounded_value is None else alpha * self.unbounded_value
        return PotentialGrid(self.nodes, self.weights, alpha * self.values, self.domain,
                             self.half_space, unb, self.label)

    def translated(self, shift) -> "PotentialGrid":
        """``f(. - shift)``; support flags are dropped."""
        return PotentialGrid(self.nodes + np.asarray(shift, dtype=float), self.weights, self.values,
                             None, False, self.unbounded_value, self.label + " (translated)")

    # constructors ---------------------------------------------------------
    @classmethod
    def on_domain(cls, domain: Domain2D, func, n_radial: int = 64, n_angular: Optional[int] = None,
                  label: str = "potential") -> "PotentialGrid":
        nodes, w = interior_quadrature(domain, n_radial, n_angular)
        vals = np.asarray(func(nodes), dtype=complex) if callable(func) else np.full(len(w), func, dtype=complex)
        half = bool(np.all(nodes[:, 0] <= 0))
        return cls(nodes, w, vals, domain, half, None, label)

    @classmethod
    def on_box(cls, func, lo, hi, panels=8, order=16, domain=None, label="potential") -> "PotentialGrid":
        """Composite Gauss-Legendre tensor grid on a box; nodes with f = 0 are
        dropped.  When ``domain`` is given f is extended by zero outside it."""
        lo, hi = np.atleast_1d(np.asarray(lo, dtype=float)), np.atleast_1d(np.asarray(hi, dtype=float))
        g, gw = np.polynomial.legendre.leggauss(order)
        axes, wts = [], []
        for a, b in zip(lo, hi):
            edges = np.linspace(a, b, panels + 1)
            half = np.diff(edges) / 2
            mid = (edges[:-1] + edges[1:]) / 2
            axes.append((mid[:, None] + half[:, None] * g[None, :]).ravel())
            wts.append((half[:, None] * gw[None, :]).ravel())
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.column_stack([m.ravel() for m in mesh])
        w = np.ones(len(nodes))
        for wk in np.meshgrid(*wts, indexing="ij"):
            w = w * wk.ravel()
        vals = np.asarray(func(nodes), dtype=complex)
        if domain is not None:
            vals = np.where(domain.contains(nodes), vals, 0.0)
        keep = vals != 0
        nodes, w, vals = nodes[keep], w[keep], vals[keep]
        half = bool(np.all(nodes[:, 0] <= 0)) if len(nodes) else True
        return cls(nodes, w, vals, domain, half, None, label)

    @classmethod
    def halfline_indicator(cls, length: float = 10.0, panels: int = 400, order: int = 16) -> "PotentialGrid":
        """Indicator of ``(-inf, 0]`` truncated at ``-length`` (1D)."""
        grid = cls.on_box(lambda x: np.ones(len(x)), [-length], [0.0], panels, order, label="half-line indicator")
        return cls(grid.nodes, grid.weights, grid.values, None, True, None, grid.label)

    @classmethod
    def constant(cls, value: complex, n: int = 1) -> "PotentialGrid":
        return cls(np.zeros((0, n)), np.zeros(0), np.zeros(0), None, False, complex(value), "constant")

    @classmethod
    def zero(cls, n: int = 2, domain=None) -> "PotentialGrid":
        return cls(np.zeros((0, n)), np.zeros(0), np.zeros(0), domain, True, None, "zero")


# ---------------------------------------------------------------------------
# pairings
# ---------------------------------------------------------------------------
def _exp_log(fld: CorrectedExponential, nodes) -> LogComplex:
    z = fld.zeta.zeta
    return LogComplex(nodes @ z.imag / fld.h, -(nodes @ z.real) / fld.h)


def _log_values(fld: HarmonicField, nodes, w_values=None) -> LogComplex:
    if isinstance(fld, CorrectedExponential):
        w = fld.w.evaluate(nodes) if w_values is None else w_values
        return _exp_log(fld, nodes) + LogComplex.from_complex(w)
    return LogComplex.from_complex(fld.evaluate(nodes))


def _check_pairing(f: PotentialGrid, *fields) -> None:
    if f.unbounded_value is not None:
        raise ValueError("pairings need a compactly supported potential")
    for fld in fields:
        if f.domain is not None and fld.domain is not None and f.domain is not fld.domain:
            raise ValueError("f and the fields must live on the same domain")


def _weighted_f(f: PotentialGrid) -> LogComplex:
    return LogComplex.from_complex(f.weights * f.values)


def pair_log(f: PotentialGrid, u: HarmonicField, v: HarmonicField) -> LogComplex:
    """``int f u v`` accumulated in log scale."""
    _check_pairing(f, u, v)
    if f.is_zero:
        return LogComplex.zeros()
    lu = _log_values(u, f.nodes)
    lv = lu if v is u else _log_values(v, f.nodes)
    return (_weighted_f(f) * (lu * lv)).sum()


def pair(f: PotentialGrid, u: HarmonicField, v: HarmonicField) -> complex:
    return complex(pair_log(f, u, v).to_complex())


def fourier_moment_log(f: PotentialGrid, z, h: float) -> LogComplex:
    """``int f(x) exp(-i x.z/h) dx`` in log scale."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    if z.size != f.n:
        raise ValueError(f"frequency has dimension {z.size}, potential has {f.n}")
    if f.unbounded_value is not None:
        raise ValueError("Fourier moments need a compactly supported potential")
    if f.is_zero:
        return LogComplex.zeros()
    e = LogComplex(f.nodes @ z.imag / h, -(f.nodes @ z.real) / h)
    return (_weighted_f(f) * e).sum()


def fourier_moment(f: PotentialGrid, z, h: float) -> complex:
    return complex(fourier_moment_log(f, z, h).to_complex())


def _l2(values, weights) -> float:
    return float(np.sqrt(np.sum(weights * np.abs(values) ** 2)))


def moment_identity(f: PotentialGrid, u_zeta: CorrectedExponential, u_eta: CorrectedExponential,
                    reference: Optional[PotentialGrid] = None) -> dict:
    """Both sides of the expansion of ``int f u_zeta u_eta``.

    ``lhs`` is the Fourier moment at ``zeta + eta``; ``rhs`` is the pairing
    minus the three correction integrals.  ``relative`` is their difference
    over the largest term.  On a shared grid the two sides agree to
    rounding; pass ``reference`` (the same f on another quadrature) to
    compute ``lhs`` independently.
    """
    _check_pairing(f, u_zeta, u_eta)
    zsum = u_zeta.zeta.zeta + u_eta.zeta.zeta
    h = u_zeta.h
    if u_eta.h != h:
        raise ValueError("both factors must share h")
    lhs = fourier_moment(f if reference is None else reference, zsum, h)
    nodes, wf = f.nodes, f.weights * f.values
    ez = u_zeta.exponential.evaluate(nodes)
    ee = u_eta.exponential.evaluate(nodes)
    wz = u_zeta.w.evaluate(nodes)
    we = u_eta.w.evaluate(nodes)
    corr = [np.sum(wf * ez * we), np.sum(wf * ee * wz), np.sum(wf * wz * we)]
    if f.is_zero:
        p = 0j
    else:
        lu = _log_values(u_zeta, nodes, wz)
        lv = _log_values(u_eta, nodes, we)
        p = complex((_weighted_f(f) * (lu * lv)).sum().to_complex())
    rhs = p - sum(corr)
    scale = max(abs(lhs), abs(p), *(abs(c) for c in corr))
    diff = abs(lhs - rhs)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "pair": p,
        "corrections": corr,
        "abs_residual": diff,
        "relative": 0.0 if scale == 0 else diff / scale,
        "bound_side": f.sup_norm * (
            _l2(ez, f.weights) * _l2(we, f.weights)
            + _l2(ee, f.weights) * _l2(wz, f.weights)
            + _l2(wz, f.weights) * _l2(we, f.weights)
        ),
    }


def check_epsilon_rule(c: float, epsilon: float, c_meas: float) -> None:
    if not epsilon < c / (8.0 * c_meas):
        raise ValueError(
            f"epsilon = {epsilon:g} violates epsilon < c/(8 C) = {c / (8 * c_meas):.4g} "
            f"with measured C = {c_meas:.4g}"
        )


def verify_fourier_estimate(f: PotentialGrid, domain: Domain2D, chi: CutoffSpec, a: float,
                            epsilon: float, h_list: Sequence[float], z=None,
                            c_meas: Optional[float] = None, quad_tol: float = 1e-8,
                            slope_tol: float = 0.05) -> DecayReport:
    """Moment identity residuals and decay slopes against the exponent
    ``-c a/2 + 2 C eps a`` of the Fourier estimate.

    ``log_norms`` holds ``log |int f exp(-i x.z/h)|``; the estimate's bound side
    ``||f|| (||e_zeta|| ||w_eta|| + ...)`` is fitted separately and must not
    decay slower than the exponent.  ``extra["estimate_holds"]`` records
    whether ``|lhs| <= bound side`` at every h; it is automatic when the
    moments vanish and fails for generic f.
    """
    h_list = validate_h_list(h_list)
    c_meas = decomposition_constant(2) if c_meas is None else float(c_meas)
    check_epsilon_rule(chi.c, epsilon, c_meas)
    if z is None:
        z = np.array([2j * a, 0.0])
    z = np.asarray(z, dtype=complex)
    zeta, eta, _ = null_decompose_near(z, a, eps_max=epsilon)
    exponent = -chi.c * a / 2 + 2 * c_meas * epsilon * a
    if f.is_zero:
        return DecayReport(h_list, [-math.inf] * len(h_list), -math.inf, exponent, slope_tol, 0.0,
                           "exact zero", True, {"residuals": [0.0] * len(h_list), "estimate_holds": True})
    logs, bound_logs, residuals = [], [], []
    for h in h_list:
        uz = build_corrected_exponential(domain, zeta, h, chi)
        ue = build_corrected_exponential(domain, eta, h, chi)
        ident = moment_identity(f, uz, ue)
        residuals.append(ident["relative"])
        logs.append(math.log(abs(ident["lhs"])) if ident["lhs"] != 0 else -math.inf)
        bound_logs.append(math.log(ident["bound_side"]))
    bound_slope, bres = fit_slope(h_list, bound_logs)
    lhs_slope, lres = fit_slope(h_list, logs)
    ok_resid = max(residuals) <= quad_tol
    ok_bound = bound_slope <= exponent + slope_tol * max(1.0, abs(exponent))
    extra = {
        "residuals": residuals,
        "bound_side_logs": bound_logs,
        "bound_side_slope": bound_slope,
        "lhs_slope_within_exponent": bool(lhs_slope <= exponent + slope_tol * max(1.0, abs(exponent))),
        "estimate_holds": bool(all(l <= b + 1e-8 for l, b in zip(logs, bound_logs))),
        "c_meas": c_meas,
        "epsilon": epsilon,
        "a": a,
        "z": [[v.real, v.imag] for v in z],
    }
    return DecayReport(h_list, logs, lhs_slope, exponent, slope_tol, lres, "ok", ok_resid and ok_bound, extra)


# ---------------------------------------------------------------------------
# moment sets and reconstruction
# ---------------------------------------------------------------------------
def _cplx(v):
    return [float(np.real(v)), float(np.imag(v))]


@dataclass
class MomentSet:
    """Moments ``int f u_zeta u_eta`` with replayable metadata."""

    zetas: np.ndarray
    etas: np.ndarray
    h: float
    values: np.ndarray
    c: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.zetas = np.asarray(self.zetas, dtype=complex).reshape(-1, 2)
        self.etas = np.asarray(self.etas, dtype=complex).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=complex).reshape(-1)
        if not (len(self.zetas) == len(self.etas) == len(self.values)):
            raise ValueError("moment set arrays must have equal length")
        for z in np.vstack([self.zetas, self.etas]):
            NullVector(z)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("moments must be finite")

    def __len__(self):
        return len(self.values)

    def to_json(self) -> str:
        return json.dumps({
            "h": self.h,
            "c": self.c,
            "zetas": [[_cplx(a), _cplx(b)] for a, b in self.zetas],
            "etas": [[_cplx(a), _cplx(b)] for a, b in self.etas],
            "values": [_cplx(v) for v in self.values],
            "metadata": self.metadata,
        })

    @classmethod
    def from_json(cls, text: str) -> "MomentSet":
        d = json.loads(text)
        to = lambda rows: np.array([[complex(*p) for p in row] for row in rows])  # noqa: E731
        return cls(to(d["zetas"]), to(d["etas"]), d["h"], np.array([complex(*v) for v in d["values"]]),
                   d["c"], d.get("metadata", {}))


def frequency_pairs(k_max: float, n_per_axis: int, h: float = 1.0, a0: float = 0.02):
    """Null pairs whose sums are ``z = h k + 2 i a e1`` for ``k`` on a square
    grid of half-width ``k_max``, with the smallest shift ``a = |k2| h/2 + a0 h``
    keeping ``Im zeta_1`` and ``Im eta_1`` non-negative."""
    ks = np.linspace(-k_max, k_max, n_per_axis)
    K1, K2 = np.meshgrid(ks, ks, indexing="ij")
    k1, k2 = K1.ravel(), K2.ravel()
    a = np.abs(k2) * h / 2 + a0 * h
    z1, z2 = h * k1 + 2j * a, h * k2 + 0j
    zetas = ((z2 - 1j * z1) / 2)[:, None] * GAMMA[None, :]
    etas = ((z2 + 1j * z1) / 2)[:, None] * np.conj(GAMMA)[None, :]
    return zetas, etas


def product_values(domain: Domain2D, zetas, etas, h, chi: CutoffSpec, points) -> np.ndarray:
    """``u_zeta(x) u_eta(x)`` at ``points`` for every pair; returns (P, K)."""
    K = len(zetas)
    vals = corrected_exponential_values(domain, np.vstack([zetas, etas]), h, chi, points)
    return vals[:, :K] * vals[:, K:]


def compute_moments(f: PotentialGrid, domain: Domain2D, chi: CutoffSpec, zetas, etas, h: float,
                    metadata: Optional[dict] = None) -> MomentSet:
    prod = product_values(domain, zetas, etas, h, chi, f.nodes)
    vals = (f.weights * f.values) @ prod
    return MomentSet(zetas, etas, h, vals, chi.c, dict(metadata or {}))


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred ``shape`` grid on the box ``lo``..``hi``; unknowns are the
    cells whose centres lie in the domain."""

    lo: tuple
    hi: tuple
    shape: tuple = (16, 16)

    def centres(self):
        xs = [np.linspace(l, h, n + 1) for l, h, n in zip(self.lo, self.hi, self.shape)]
        xs = [(e[:-1] + e[1:]) / 2 for e in xs]
        X, Y = np.meshgrid(*xs, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def cell_area(self) -> float:
        return float(np.prod([(h - l) / n for l, h, n in zip(self.lo, self.hi, self.shape)]))

    def potential(self, domain: Domain2D, func) -> PotentialGrid:
        pts = self.centres()
        pts = pts[domain.contains(pts)]
        if callable(func):
            vals = np.asarray(func(pts), dtype=complex)
        else:
            vals = np.broadcast_to(np.asarray(func, dtype=complex), (len(pts),))
        return PotentialGrid(pts, np.full(len(pts), self.cell_area), vals, domain,
                             bool(np.all(pts[:, 0] <= 0)), None, "grid")


@dataclass
class ReconstructionInfo:
    lam: float
    residual: float
    discrepancy_target: float
    normal_condition: float
    chosen_by: str


class ConditioningError(RuntimeError):
    pass


def _real_system(A, m):
    return np.vstack([A.real, A.imag]), np.concatenate([m.real, m.imag])


def reconstruct(moments: MomentSet, grid_spec: GridSpec, domain: Domain2D, lam: Optional[float] = None,
                noise_level: float = 1e-8, tau: float = 1.5):
    """Tikhonov solution of ``A c = m`` with ``A[m, i] = w_i u_m(x_i) v_m(x_i)``.

    ``lam`` is absolute.  When omitted it is the largest value on a
    logarithmic ladder whose residual meets the discrepancy target
    ``tau * noise_level * ||m||``.  Returns ``(PotentialGrid, ReconstructionInfo)``.
    """
    if lam is not None and not lam > 0:
        raise ValueError("lambda must be positive")
    grid = grid_spec.potential(domain, 0.0)
    if len(moments) < len(grid.values) / 4:
        raise ValueError(f"{len(moments)} moments are fewer than a quarter of {len(grid.values)} unknowns")
    chi = CutoffSpec(moments.c)
    prod = product_values(domain, moments.zetas, moments.etas, moments.h, chi, grid.nodes)
    A = (grid.weights[:, None] * prod).T
    Ar, mr = _real_system(A, moments.values)
    U, s, Vt = la.svd(Ar, full_matrices=False)
    beta = U.T @ mr
    mnorm = float(np.linalg.norm(mr))
    smax2 = float(s[0] ** 2) if len(s) else 1.0
    lam_floor = smax2 / NORMAL_COND_LIMIT

    def solve(l):
        coef = Vt.T @ ((s / (s**2 + l)) * beta)
        return coef, float(np.linalg.norm(Ar @ coef - mr))

    target = tau * noise_level * mnorm
    if lam is None:
        chosen = None
        for l in smax2 * np.logspace(0, -13.5, 55):
            coef, res = solve(l)
            if res <= target:
                chosen = l
                break
        chosen_by = "discrepancy"
        if chosen is None:
            chosen, chosen_by = smax2 * 10 ** -13.5, "discrepancy (floor)"
        lam = float(chosen)
    else:
        chosen_by = "given"
    cond = (smax2 + lam) / (float(s[-1] ** 2) + lam)
    if cond > NORMAL_COND_LIMIT or lam < lam_floor:
        raise ConditioningError(
            f"normal equations have condition {cond:.3e} > {NORMAL_COND_LIMIT:g}; increase lambda "
            f"above {lam_floor:.3e}"
        )
    coef, res = solve(lam)
    if mnorm == 0:
        coef = np.zeros_like(coef)
    fhat = PotentialGrid(grid.nodes, grid.weights, coef, domain, grid.half_space, None, "reconstruction")
    return fhat, ReconstructionInfo(lam, res, target, cond, chosen_by)


def relative_l2_error(fhat: PotentialGrid, truth) -> float:
    ref = np.asarray(truth(fhat.nodes) if callable(truth) else truth, dtype=complex)
    den = np.linalg.norm(ref)
    num = np.linalg.norm(fhat.values - ref)
    return float(num / den) if den > 0 else float(num)
