"""Segal-Bargmann transform in log scale and the chain of growth bounds for
potentials supported in a half-space."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cgo import decomposition_constant, fit_slope, validate_h_list
from .logcomplex import LogComplex
from .pairing import PotentialGrid, check_epsilon_rule

__all__ = [
    "LogComplex",
    "BargmannGrid",
    "BoundReport",
    "Superposition",
    "transform",
    "transform_many",
    "weight_phi",
    "check_apriori_bound",
    "check_halfspace_bound",
    "superposed_transform",
    "check_improved_bound",
    "cauchy_riemann_residual",
    "tail_exponent",
    "minimal_admissible_a",
]

_BLOCK = 4096


def _rowsum_exp(E) -> LogComplex:
    """``sum_j exp(E[k, j])`` per row for complex exponents, max-shifted."""
    top = np.max(E.real, axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(under="ignore"):
        s = np.exp(E - top[:, None]).sum(axis=1)
    mag = np.abs(s)
    with np.errstate(divide="ignore"):
        lm = np.where(mag > 0, top + np.log(np.where(mag > 0, mag, 1.0)), -np.inf)
    return LogComplex(lm, np.angle(s))


def _log_weights(f: PotentialGrid):
    wf = f.weights * f.values
    keep = wf != 0
    return f.nodes[keep], np.log(wf[keep])


def _bilinear_square(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.sum(z * z, axis=-1)


def transform_many(f: PotentialGrid, zs, h: float) -> LogComplex:
    """``Tf`` at each row of ``zs`` (P, n).

    Uses ``Tf(z) = exp(-z^2/2h) sum_j w_j f_j exp((2 z.y_j - y_j^2)/2h)`` so
    the summands stay of size ``exp(|z||y|/h)`` even when ``|z|`` is large.
    """
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    zs = np.asarray(zs, dtype=complex)
    if zs.ndim == 1:
        zs = zs[:, None] if f.n == 1 else zs[None, :]
    if zs.shape[1] != f.n:
        raise ValueError(f"z has dimension {zs.shape[1]}, potential has {f.n}")
    P = len(zs)
    if f.unbounded_value is not None:
        if f.unbounded_value == 0:
            return LogComplex.zeros(P)
        c = LogComplex.from_complex(f.unbounded_value * (2 * math.pi * h) ** (f.n / 2))
        return LogComplex(np.full(P, float(c.log_mod)), np.full(P, float(c.phase)))
    if f.is_zero:
        return LogComplex.zeros(P)
    y, lw = _log_weights(f)
    y2 = np.sum(y * y, axis=1)
    lm = np.empty(P)
    ph = np.empty(P)
    step = max(1, _BLOCK * 64 // max(len(y), 1))
    for s in range(0, P, step):
        zb = zs[s:s + step]
        terms = _rowsum_exp((2 * (zb @ y.T) - y2[None, :]) / (2 * h) + lw[None, :])
        pre = -_bilinear_square(zb) / (2 * h)
        lm[s:s + step] = terms.log_mod + pre.real
        ph[s:s + step] = terms.phase + pre.imag
    return LogComplex(lm, ph)


def transform(f: PotentialGrid, z, h: float) -> LogComplex:
    """``Tf(z) = int exp(-(z-y)^2/2h) f(y) dy`` as a scalar :class:`LogComplex`."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    return transform_many(f, z.reshape(1, -1), h)[0]


def weight_phi(z1):
    """``|Im z1|^2``, minus ``|Re z1|^2`` when ``Re z1 >= 0``."""
    z1 = np.asarray(z1, dtype=complex)
    out = z1.imag**2 - np.where(z1.real >= 0, z1.real**2, 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# grids and reports
# ---------------------------------------------------------------------------
@dataclass
class BargmannGrid:
    """``Tf`` on a set of nodes in C^n; ``shape`` is set for rectangular
    slices in the ``z1`` plane."""

    h: float
    z_nodes: np.ndarray
    values: LogComplex
    f: PotentialGrid
    shape: Optional[tuple] = None

    def __post_init__(self):
        self.z_nodes = np.asarray(self.z_nodes, dtype=complex)
        if len({tuple(r) for r in self.z_nodes.round(15)}) != len(self.z_nodes):
            raise ValueError("grid nodes must be distinct")

    @classmethod
    def slice(cls, f: PotentialGrid, h: float, re_range=(-2.0, 2.0), im_range=(-2.0, 2.0),
              shape=(41, 41), z_rest=None) -> "BargmannGrid":
        """Rectangle in the ``z1`` plane with the remaining coordinates fixed."""
        xr = np.linspace(*re_range, shape[0])
        yi = np.linspace(*im_range, shape[1])
        X, Y = np.meshgrid(xr, yi, indexing="ij")
        z1 = (X + 1j * Y).ravel()
        rest = np.zeros(f.n - 1, dtype=complex) if z_rest is None else np.asarray(z_rest, dtype=complex)
        nodes = np.column_stack([z1] + [np.full(len(z1), r) for r in rest])
        return cls(h, nodes, transform_many(f, nodes, h), f, tuple(shape))

    def to_csv(self, path) -> None:
        n = self.z_nodes.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = []
            for k in range(n):
                head += [f"re_z{k + 1}", f"im_z{k + 1}"]
            w.writerow(head + ["log_mod", "phase"])
            for z, lm, ph in zip(self.z_nodes, self.values.log_mod, self.values.phase):
                row = []
                for v in z:
                    row += [f"{v.real:.17g}", f"{v.imag:.17g}"]
                w.writerow(row + [f"{lm:.17g}", f"{ph:.17g}"])


def _num(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


@dataclass
class BoundReport:
    """Per-node ``lhs <= rhs`` comparison in log units; ``slack = rhs - lhs``."""

    name: str
    nodes: list
    lhs: np.ndarray
    rhs: np.ndarray
    tol: float
    extra: dict = field(default_factory=dict)
    passed: Optional[bool] = None

    def __post_init__(self):
        self.lhs = np.asarray(self.lhs, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.passed is None:
            self.passed = bool(self.worst_slack >= -self.tol)

    @property
    def slack(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            s = self.rhs - self.lhs
        # lhs = -inf is an exact zero: the bound holds with unlimited room
        return np.where(np.isneginf(self.lhs), np.inf, s)

    @property
    def worst_index(self) -> int:
        return int(np.argmin(self.slack)) if len(self.lhs) else -1

    @property
    def worst_slack(self) -> float:
        return float(np.min(self.slack)) if len(self.lhs) else math.inf

    def to_dict(self) -> dict:
        rows = [{"node": _node(n), "lhs": _num(l), "rhs": _num(r), "slack": _num(s)}
                for n, l, r, s in zip(self.nodes, self.lhs, self.rhs, self.slack)]
        i = self.worst_index
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "tol": self.tol,
            "worst_slack": _num(self.worst_slack),
            "worst_node": _node(self.nodes[i]) if i >= 0 else None,
            "rows": rows,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _node(n):
    if isinstance(n, (list, tuple, np.ndarray)):
        out = []
        for v in np.atleast_1d(n):
            v = complex(v)
            out.append([v.real, v.imag])
        return out
    return _num(n) if isinstance(n, (float, int, np.floating)) else n


def _log_sup(f: PotentialGrid) -> float:
    s = f.sup_norm
    return math.log(s) if s > 0 else -math.inf


def check_apriori_bound(grid: BargmannGrid, tol: float = 1e-8) -> BoundReport:
    """``log|Tf| - |Im z|^2/2h - (n/2) log(2 pi h) <= log ||f||`` at every node."""
    h, n = grid.h, grid.z_nodes.shape[1]
    base = np.sum(grid.z_nodes.imag**2, axis=1) / (2 * h) + n / 2 * math.log(2 * math.pi * h)
    lhs = grid.values.log_mod - base
    rhs = np.full(len(lhs), _log_sup(grid.f))
    return BoundReport("apriori", list(grid.z_nodes), lhs, rhs, tol)


def check_halfspace_bound(grid: BargmannGrid, tol: float = 1e-8) -> BoundReport:
    """The half-space improvement at nodes with ``Re z1 >= 0``.

    ``extra["re_z1_slope"]`` is the least-squares slope of the normalized
    log-modulus against ``(Re z1)^2``; the bound predicts ``-1/2h``.
    """
    f = grid.f
    if not f.half_space:
        raise ValueError("potential is not flagged as supported in x1 <= 0")
    if len(f.nodes) and np.any(f.nodes[:, 0] > 0):
        raise ValueError("potential has nodes with x1 > 0")
    h, n = grid.h, grid.z_nodes.shape[1]
    keep = grid.z_nodes[:, 0].real >= 0
    z = grid.z_nodes[keep]
    im2 = np.sum(z.imag**2, axis=1) / (2 * h)
    re2 = z[:, 0].real ** 2
    lhs = grid.values.log_mod[keep] - im2 + re2 / (2 * h) - n / 2 * math.log(2 * math.pi * h)
    rhs = np.full(len(lhs), _log_sup(f))
    extra = {"expected_slope": -1.0 / (2 * h)}
    finite = np.isfinite(grid.values.log_mod[keep])
    if np.count_nonzero(finite) >= 2 and np.ptp(re2[finite]) > 0:
        A = np.column_stack([np.ones(np.count_nonzero(finite)), re2[finite]])
        coef, *_ = np.linalg.lstsq(A, grid.values.log_mod[keep][finite] - im2[finite], rcond=None)
        extra["re_z1_slope"] = float(coef[1])
    return BoundReport("halfspace", list(z), lhs, rhs, tol, extra)


def cauchy_riemann_residual(grid: BargmannGrid) -> tuple:
    """Centred-difference ``d/dzbar`` of ``Tf`` on a rectangular slice,
    relative to ``|dTf/dz|``; returns ``(residual, step^2 truncation scale)``."""
    if grid.shape is None:
        raise ValueError("grid is not a rectangular slice")
    top = float(np.max(grid.values.log_mod))
    vals = LogComplex(grid.values.log_mod - top, grid.values.phase).to_complex().reshape(grid.shape)
    re = grid.z_nodes[:, 0].real.reshape(grid.shape)
    im = grid.z_nodes[:, 0].imag.reshape(grid.shape)
    dx, dy = re[1, 0] - re[0, 0], im[0, 1] - im[0, 0]
    fx = (vals[2:, 1:-1] - vals[:-2, 1:-1]) / (2 * dx)
    fy = (vals[1:-1, 2:] - vals[1:-1, :-2]) / (2 * dy)
    dbar = 0.5 * (fx + 1j * fy)
    dz = 0.5 * (fx - 1j * fy)
    return float(np.max(np.abs(dbar)) / np.max(np.abs(dz))), max(dx, dy) ** 2


# ---------------------------------------------------------------------------
# superposition
# ---------------------------------------------------------------------------
def _fourier_log_many(f: PotentialGrid, xis, h) -> LogComplex:
    """``int f exp(-i y.xi/h) dy`` for each row of ``xis`` in log scale."""
    y, lw = _log_weights(f)
    K = len(xis)
    lm, ph = np.empty(K), np.empty(K)
    step = max(1, _BLOCK * 64 // max(len(y), 1))
    for s in range(0, K, step):
        t = _rowsum_exp(-1j * (xis[s:s + step] @ y.T) / h + lw[None, :])
        lm[s:s + step], ph[s:s + step] = t.log_mod, t.phase
    return LogComplex(lm, ph)


def _t_quadrature(n: int, r0: float, r1: float, h: float, ymax: float, order: int = 16):
    """Nodes and weights on ``r0 <= |t| <= r1`` in R^n (n = 1 or 2), fine
    enough for oscillation ``exp(-i y.t/h)`` with ``|y| <= ymax``."""
    g, gw = np.polynomial.legendre.leggauss(order)
    wavelength = 2 * math.pi * h / max(ymax, 1e-12)
    panels = max(1, int(math.ceil((r1 - r0) / wavelength)))
    edges = np.linspace(r0, r1, panels + 1)
    half = np.diff(edges) / 2
    r = ((edges[:-1] + edges[1:]) / 2)[:, None] + half[:, None] * g[None, :]
    wr = half[:, None] * gw[None, :]
    r, wr = r.ravel(), wr.ravel()
    if n == 1:
        return np.concatenate([-r, r])[:, None], np.concatenate([wr, wr])
    if n != 2:
        raise NotImplementedError("superposition quadrature is implemented for n = 1, 2")
    m = int(math.ceil(r1 * ymax / h + 40))
    th = 2 * math.pi * np.arange(m) / m
    R, T = np.meshgrid(r, th, indexing="ij")
    W = (wr * r)[:, None] * np.full(m, 2 * math.pi / m)[None, :]
    return np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()]), W.ravel()


def tail_exponent(t_split: float, h: float) -> float:
    """Gaussian factor ``-t_split^2/4h`` of the tail bound, in log units."""
    return -t_split**2 / (4 * h)


@dataclass
class Superposition:
    """Split of ``Tf(z)`` over ``|t| <= t_split`` and the remaining tail."""

    inner: LogComplex
    tail: LogComplex
    tail_bound: LogComplex
    t_split: float

    def total(self) -> LogComplex:
        return self.inner + self.tail


def superposed_transform(f: PotentialGrid, z, h: float, t_split: float,
                         tail_sigmas: float = 9.0) -> Superposition:
    """``Tf(z)`` rebuilt from Fourier moments at ``t + i z``.

    ``tail`` integrates ``t_split <= |t| <= t_split + tail_sigmas sqrt(h)``;
    the Gaussian beyond that is below ``exp(-tail_sigmas^2/2)``.
    ``tail_bound`` is ``sqrt 2 e^{|Re z'|/h} e^{-t_split^2/4h} int|f|`` times
    ``exp((|Im z|^2 - |Re z|^2)/2h)``, valid for ``Re z1 >= 0`` and f in
    ``x1 <= 0``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    n = f.n
    if f.unbounded_value is not None:
        raise ValueError("superposition needs a compactly supported potential")
    if f.is_zero:
        zero = LogComplex.zeros()
        return Superposition(zero, zero, zero, t_split)
    ymax = float(np.max(np.linalg.norm(f.nodes, axis=1)))
    pre = -_bilinear_square(z) / (2 * h)
    norm = -n / 2 * math.log(2 * math.pi * h)

    def piece(r0, r1):
        t, w = _t_quadrature(n, r0, r1, h, ymax)
        m = _fourier_log_many(f, t + 1j * z[None, :], h)
        g = -np.sum(t * t, axis=1) / (2 * h)
        s = LogComplex(m.log_mod + g + np.log(w), m.phase).sum()
        return LogComplex(s.log_mod + pre.real + norm, s.phase + pre.imag)

    inner = piece(0.0, t_split)
    tail = piece(t_split, t_split + tail_sigmas * math.sqrt(h))
    re_rest = float(np.linalg.norm(z[1:].real)) if n > 1 else 0.0
    log_b = (0.5 * math.log(2) + re_rest / h + tail_exponent(t_split, h) + math.log(f.l1_norm)
             + (np.sum(z.imag**2) - np.sum(z.real**2)) / (2 * h))
    return Superposition(inner, tail, LogComplex(float(log_b)), t_split)


# ---------------------------------------------------------------------------
# improved bound
# ---------------------------------------------------------------------------
def check_parameter_rule(c: float, epsilon: float, a: float, c_meas: float) -> None:
    check_epsilon_rule(c, epsilon, c_meas)
    if not a > (c + 4 * epsilon) / epsilon**2:
        raise ValueError(f"a = {a:g} violates a > (c + 4 eps)/eps^2 = {(c + 4 * epsilon) / epsilon**2:.6g}")


def minimal_admissible_a(c: float, epsilon: float) -> float:
    return (c + 4 * epsilon) / epsilon**2 * (1 + 1e-9)


def check_improved_bound(f: PotentialGrid, c: float, a: float, epsilon: float, h_list: Sequence[float],
                         c_meas: Optional[float] = None, slope_tol: float = 0.05) -> BoundReport:
    """Decay of ``exp(-Phi/2h)|Tf(2a e1)|`` in ``1/h`` against ``-c a/4``.

    Rows are per h with ``lhs`` the weighted log-modulus; ``extra`` carries
    the fitted slope and the pass criterion ``slope <= -c a/4 + slope_tol``.
    """
    h_list = validate_h_list(h_list)
    c_meas = decomposition_constant(2) if c_meas is None else float(c_meas)
    check_parameter_rule(c, epsilon, a, c_meas)
    z = np.zeros(f.n, dtype=complex)
    z[0] = 2 * a
    phi = weight_phi(z[0]) + float(np.sum(z[1:].imag ** 2))
    logs = []
    for h in h_list:
        logs.append(float(transform(f, z, h).log_mod) - phi / (2 * h))
    target = -c * a / 4
    rhs = [target / h for h in h_list]
    if all(math.isinf(v) for v in logs):
        extra = {"fitted_slope": "-inf", "target_slope": target, "status": "exact zero"}
        return BoundReport("improved", list(h_list), logs, rhs, slope_tol, extra, True)
    slope, resid = fit_slope(h_list, logs)
    extra = {"fitted_slope": slope, "target_slope": target, "fit_residual": resid, "a": a,
             "epsilon": epsilon, "c": c, "c_meas": c_meas}
    return BoundReport("improved", list(h_list), logs, rhs, slope_tol, extra, bool(slope <= target + slope_tol))
