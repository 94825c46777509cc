"""Propagation of exponential decay for entire functions by comparison with a
harmonic barrier on a semi-disc with a removed disc.

The barrier ``phi`` equals ``A = 4 delta^2`` on the semi-disc boundary and
``B = -c`` on the circle ``|s - L| = b``.  It is computed by odd reflection
across the cut, which turns the region into a full disc with two holes and
keeps every boundary component smooth.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bargmann import transform_many, weight_phi
from .geometry import make_domain
from .laplace import MultiplyConnectedDomain, solve_dirichlet
from .pairing import PotentialGrid


class HypothesisViolation(ValueError):
    """A sampled value of ``F`` breaks one of the growth hypotheses."""

    def __init__(self, message, sample: dict):
        super().__init__(message)
        self.sample = sample


# ---------------------------------------------------------------------------
# region and barrier
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BarrierRegion:
    """``{|s - x_cut| < R, Re s > x_cut} minus the closed disc D(L, b)``.

    ``cut`` is the abscissa of the cut diameter as a multiple of ``-delta``:
    the default 2 puts it at ``-2 delta``.
    """

    delta: float
    R: float = 10.0
    L: float = 2.0
    b: float = 0.5
    cut: float = 2.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.b < self.L:
            raise ValueError("need 0 < b < L")
        if not self.R > self.L + self.b - self.x_cut:
            raise ValueError("the excluded disc must lie strictly inside the semi-disc")
        if not self.L - self.b > self.x_cut:
            raise ValueError("the cut must not meet the excluded disc")
        if not self.cut > 0:
            raise ValueError("cut multiple must be positive")

    @property
    def x_cut(self) -> float:
        return -self.cut * self.delta

    def contains(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        return (np.abs(s - self.x_cut) < self.R) & (s.real > self.x_cut) & (np.abs(s - self.L) > self.b)

    def boundary_samples(self, n: int = 400):
        """``(semi-disc boundary, circle)`` samples; the arc and the cut share
        ``n`` nodes in proportion to length and the circle gets ``n``."""
        x0, R = self.x_cut, self.R
        n_cut = max(8, int(round(n * 2 * R / (2 * R + math.pi * R))))
        n_arc = max(8, n - n_cut)
        cut = x0 + 1j * np.linspace(-R, R, n_cut)
        th = np.linspace(-np.pi / 2, np.pi / 2, n_arc + 2)[1:-1]
        arc = x0 + R * np.exp(1j * th)
        circ = self.L + self.b * np.exp(2j * np.pi * np.arange(n) / n)
        return np.concatenate([cut, arc]), circ

    def random_points(self, n: int, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        out = []
        while sum(len(o) for o in out) < n:
            r = self.R * np.sqrt(rng.uniform(size=4 * n))
            th = rng.uniform(-np.pi / 2, np.pi / 2, size=4 * n)
            s = self.x_cut + r * np.exp(1j * th)
            out.append(s[self.contains(s)])
        return np.concatenate(out)[:n]


@dataclass
class BarrierFunction:
    """Harmonic ``phi`` on a :class:`BarrierRegion` with constant data ``A``
    on the semi-disc boundary and ``B`` on the inner circle."""

    region: BarrierRegion
    A: float
    B: float
    M: int = 512
    M_hole: int = 256
    _field: object = field(default=None, repr=False)

    def __post_init__(self):
        reg = self.region
        x0 = reg.x_cut
        outer = make_domain("circle", self.M, radius=reg.R, center=(x0, 0.0))
        hole = make_domain("circle", self.M_hole, radius=reg.b, center=(reg.L, 0.0))
        mirror = make_domain("circle", self.M_hole, radius=reg.b, center=(2 * x0 - reg.L, 0.0))
        dom = MultiplyConnectedDomain(outer, (hole, mirror))
        jump = self.B - self.A
        g = np.concatenate([np.zeros(self.M), np.full(self.M_hole, jump), np.full(self.M_hole, -jump)])
        self._field = solve_dirichlet(dom, g)

    @property
    def c(self) -> float:
        return -self.B

    @property
    def delta(self) -> float:
        return self.region.delta

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        pts = np.column_stack([s.real, s.imag])
        return self.A + self._field.evaluate(pts).real

    def gradient(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        g = self._field.gradient(np.column_stack([s.real, s.imag]))
        return g.real

    def tilde(self, s) -> np.ndarray:
        """``4 delta^2 - phi``, i.e. ``A - phi``."""
        return self.A - self(s)

    def refined(self, factor: int = 2) -> "BarrierFunction":
        return BarrierFunction(self.region, self.A, self.B, self.M * factor, self.M_hole * factor)

    def max_principle_slack(self, n: int = 1000, rng=0) -> float:
        """Largest excursion of ``phi`` outside ``[min(A,B), max(A,B)]`` at
        random interior points."""
        v = self(self.region.random_points(n, rng))
        lo, hi = min(self.A, self.B), max(self.A, self.B)
        return float(max(0.0, np.max(v - hi), np.max(lo - v)))

    def to_csv(self, path, nx: int = 101, ny: int = 101) -> None:
        reg = self.region
        xs = np.linspace(reg.x_cut, reg.x_cut + reg.R, nx)
        ys = np.linspace(-reg.R, reg.R, ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        s = (X + 1j * Y).ravel()
        inside = reg.contains(s)
        vals = np.full(len(s), np.nan)
        vals[inside] = self(s[inside])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["re_s", "im_s", "phi"])
            for z, v in zip(s, vals):
                w.writerow([f"{z.real:.17g}", f"{z.imag:.17g}", f"{v:.17g}"])


def build_barrier(delta: float, R: float = 10.0, L: float = 2.0, b: float = 0.5, c: float = 0.2,
                  cut: float = 2.0, M: int = 512, M_hole: int = 256) -> BarrierFunction:
    """Barrier with ``4 delta^2`` on the semi-disc boundary and ``-c`` on the circle."""
    return BarrierFunction(BarrierRegion(delta, R, L, b, cut), 4 * delta**2, -c, M, M_hole)


def annulus_solution(R: float, b: float, A: float, B: float, center=(0.0, 0.0), M: int = 256):
    """Harmonic function on ``b < |s - center| < R`` with values A outside and
    B inside; returns a callable on complex points."""
    outer = make_domain("circle", M, radius=R, center=center)
    hole = make_domain("circle", M, radius=b, center=center)
    fld = solve_dirichlet(MultiplyConnectedDomain(outer, (hole,)),
                          np.concatenate([np.full(M, A), np.full(M, B)]))

    def u(s):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        return fld.evaluate(np.column_stack([s.real, s.imag])).real

    return u


# ---------------------------------------------------------------------------
# Hopf and Harnack checks
# ---------------------------------------------------------------------------
@dataclass
class HopfReport:
    minimum: float
    maximum: float
    r: float
    c_prime_estimate: float
    positive: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _check_probe(phi: BarrierFunction, r: float) -> None:
    reg = phi.region
    clearance = 5 * reg.delta / 10
    if not 0 <= r <= reg.R - clearance:
        raise ValueError(f"probe height r = {r:g} must satisfy 0 <= r <= R - {clearance:g} (corner clearance)")


def check_hopf(phi: BarrierFunction, r: float = 1.0, n_probe: int = 201) -> HopfReport:
    """Minimum over ``|y| <= r`` of the inward normal derivative of
    ``4 delta^2 - phi`` on the cut.

    ``c_prime_estimate`` is ``delta * min / 2``, the constant the Hopf step
    provides when the minimum is positive.
    """
    _check_probe(phi, r)
    y = np.linspace(-r, r, n_probe)
    s = phi.region.x_cut + 1j * y
    d = -phi.gradient(s)[:, 0]
    lo = float(d.min())
    return HopfReport(lo, float(d.max()), r, phi.delta * lo / 2, bool(lo > 0))


@dataclass
class HarnackReport:
    anchor: float
    anchor_deviation: float
    ratio_min: float
    ratio_max: float
    scaled_ratio_min: float
    scaled_ratio_max: float
    degenerate: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_harnack(phi: BarrierFunction, r: float = 1.0, n_probe: int = 201) -> HarnackReport:
    """Compare ``4 delta^2 - phi`` on ``i[-r, r]`` with its value at
    ``L - b - delta^2``.

    ``ratio_*`` are the raw ratios.  ``scaled_ratio_*`` divide the probe
    values by their distance ``cut * delta`` to the cut, which removes the
    linear vanishing at the cut.  ``anchor_deviation`` is
    ``|tilde(L - b - delta^2) - (c + 4 delta^2)|``.
    """
    _check_probe(phi, r)
    reg = phi.region
    anchor = float(phi.tilde(reg.L - reg.b - reg.delta**2)[0])
    vals = phi.tilde(1j * np.linspace(-r, r, n_probe))
    dev = abs(anchor - (phi.A - phi.B))
    if abs(anchor) < 1e-300:
        nan = float("nan")
        return HarnackReport(anchor, dev, nan, nan, nan, nan, True)
    ratio = vals / anchor
    scaled = ratio / (reg.cut * reg.delta)
    return HarnackReport(anchor, dev, float(ratio.min()), float(ratio.max()),
                         float(scaled.min()), float(scaled.max()), False)


# ---------------------------------------------------------------------------
# decay propagation
# ---------------------------------------------------------------------------
def phi_weight(s) -> np.ndarray:
    """Weight ``Phi(s)``: ``(Im s)^2`` minus ``(Re s)^2`` when ``Re s >= 0``."""
    return np.asarray(weight_phi(np.asarray(s, dtype=complex)), dtype=float)


@dataclass
class DecayVerdict:
    delta: float
    c: float
    h: float
    c_prime: float
    max_slack: float
    boundary_slack: float
    passed: bool
    r: float
    strip_bound: float
    convention: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "delta": self.delta,
            "c": self.c,
            "c_prime": self.c_prime,
            "max_slack": self.max_slack,
            "pass": bool(self.passed),
            "h": self.h,
            "boundary_slack": self.boundary_slack,
            "r": self.r,
            "strip_bound": self.strip_bound,
            "convention": self.convention,
        }
        d.update(self.extra)
        return {k: (("-inf" if v < 0 else "inf") if isinstance(v, float) and math.isinf(v) else v)
                for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _strip_grid(delta: float, r: float, shape) -> np.ndarray:
    xs = np.linspace(-delta, delta, shape[0])
    ys = np.linspace(-r, r, shape[1])
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return (X + 1j * Y).ravel()


def check_hypotheses(log_abs_F: Callable, h: float, region: BarrierRegion, c: float,
                     n_boundary: int = 400, tol: float = 1e-9) -> dict:
    """Sample ``2h log|F| <= Phi`` on the semi-disc boundary and
    ``2h log|F| <= Phi - c`` on the circle; raise on the worst violation."""
    if n_boundary < 400:
        raise ValueError("hypotheses need at least 400 boundary samples")
    outer, circ = region.boundary_samples(n_boundary)
    worst = {}
    for name, s, shift in (("growth", outer, 0.0), ("decay", circ, c)):
        lhs = 2 * h * np.asarray(log_abs_F(s), dtype=float)
        rhs = phi_weight(s) - shift
        with np.errstate(invalid="ignore"):
            gap = np.where(np.isneginf(lhs), -np.inf, lhs - rhs)
        i = int(np.argmax(gap))
        worst[name] = float(gap[i])
        if gap[i] > tol:
            raise HypothesisViolation(
                f"{name} hypothesis fails at s = {s[i]:.6g}: 2h log|F| = {lhs[i]:.6g} > {rhs[i]:.6g}",
                {"hypothesis": name, "s": [float(s[i].real), float(s[i].imag)],
                 "two_h_log_F": float(lhs[i]), "bound": float(rhs[i]), "h": h},
            )
    return worst


def propagate_decay(log_abs_F: Callable, h: float, barrier: BarrierFunction, r: float = 1.0,
                    n_boundary: int = 400, strip_shape=(21, 81), tol: float = 1e-9) -> DecayVerdict:
    """Compare ``f = 2h log|F| - (Im s)^2 + (Re s)^2`` with the barrier.

    ``log_abs_F`` maps complex points to ``log|F|`` (``-inf`` for zeros).
    Hypotheses are verified on boundary samples first.  ``c_prime`` is
    ``-max phi`` over the strip ``|Re s| <= delta, |Im s| <= r``; the verdict
    passes when ``max(f - phi) <= tol`` there.  ``strip_bound`` is
    ``max(phi - (Re s)^2)`` over the real points of the strip, so that
    ``2h log|F(x)| <= strip_bound`` for real ``|x| <= delta``.
    """
    reg = barrier.region
    if reg.delta > reg.cut * reg.delta:
        raise ValueError("strip must lie inside the region")
    hyp = check_hypotheses(log_abs_F, h, reg, barrier.c, n_boundary, tol)
    outer, circ = reg.boundary_samples(n_boundary)
    bpts = np.concatenate([outer, circ])

    def f_of(s):
        lf = np.asarray(log_abs_F(s), dtype=float)
        return np.where(np.isneginf(lf), -np.inf, 2 * h * lf - s.imag**2 + s.real**2)

    bphi = np.concatenate([np.full(len(outer), barrier.A), np.full(len(circ), barrier.B)])
    with np.errstate(invalid="ignore"):
        bslack = float(np.max(f_of(bpts) - bphi))
    s = _strip_grid(reg.delta, r, strip_shape)
    ph = barrier(s)
    with np.errstate(invalid="ignore"):
        slack = float(np.max(f_of(s) - ph))
    c_prime = float(-ph.max())
    real = s[np.abs(s.imag) < 1e-14]
    strip_bound = float(np.max(barrier(real) - real.real**2)) if len(real) else float(ph.max())
    extra = {"hypothesis_gaps": hyp}
    return DecayVerdict(reg.delta, barrier.c, h, c_prime, slack, bslack, bool(slack <= tol), r, strip_bound,
                        f"cut at -{reg.cut:g} delta", extra)


def toy_log_abs(c: float, h: float) -> Callable:
    """``log|F|`` for ``F(s) = exp(-(s^2 + c)/2h)``, for which ``f = -c``."""
    return lambda s: (-(np.asarray(s, dtype=complex) ** 2).real - c) / (2 * h)


def smallest_delta_with_decay(R=10.0, L=2.0, b=0.5, c=0.2, delta0=0.05, max_halvings=6, r=1.0,
                              M=512, M_hole=256):
    """Halve ``delta`` from ``delta0`` until the barrier is negative on the
    strip; returns ``(barrier, c_prime, history)``."""
    history = []
    delta = delta0
    for _ in range(max_halvings + 1):
        bar = build_barrier(delta, R, L, b, c, M=M, M_hole=M_hole)
        cp = float(-bar(_strip_grid(delta, r, (21, 81))).max())
        history.append((delta, cp))
        if cp > 0:
            return bar, cp, history
        delta /= 2
    return bar, cp, history


# ---------------------------------------------------------------------------
# end-to-end
# ---------------------------------------------------------------------------
def bargmann_slice_log_abs(f: PotentialGrid, h: float, x2: float) -> Callable:
    """``log|F|`` for ``F(s) = Tf(s, x2) / (2 pi h ||f||)``."""
    norm = math.log(2 * math.pi * h * f.sup_norm) if f.sup_norm > 0 else 0.0

    def g(s):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        z = np.column_stack([s, np.full(len(s), x2, dtype=complex)])
        return transform_many(f, z, h).log_mod - norm

    return g


@dataclass
class VanishingReport:
    h_list: list
    bounds: list
    statuses: list
    limit: float
    sup_norm: float
    direct: list
    h_for_tolerance: Optional[float]
    status: str
    verdicts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "h_list": self.h_list,
            "bounds": self.bounds,
            "statuses": self.statuses,
            "limit": self.limit,
            "sup_norm": self.sup_norm,
            "direct": self.direct,
            "h_for_tolerance": self.h_for_tolerance,
            "status": self.status,
        }


def strip_bounds(f: PotentialGrid, barrier: BarrierFunction, h_list: Sequence[float],
                 x2_list: Sequence[float] = (-0.16, -0.08, 0.0, 0.08, 0.16), r: float = 1.0,
                 n_boundary: int = 400):
    """Per h, an upper bound for ``(2 pi h)^{-1} |Tf(x)|`` over ``|x1| <= delta``
    and the ``x2`` slices.

    When the hypotheses hold on every slice the bound is
    ``||f|| exp(max strip_bound / 2h)``; otherwise it falls back to the
    a-priori value ``||f||``.  Returns ``(bounds, statuses, verdicts)``.
    """
    norm = f.sup_norm
    bounds, statuses, verdicts = [], [], []
    for h in h_list:
        if f.is_zero:
            bounds.append(0.0)
            statuses.append("zero")
            verdicts.append([])
            continue
        vs, status = [], "propagated"
        try:
            for x2 in x2_list:
                vs.append(propagate_decay(bargmann_slice_log_abs(f, h, x2), h, barrier, r, n_boundary))
        except HypothesisViolation as exc:
            status = f"a-priori ({exc.sample['hypothesis']} hypothesis fails)"
        if status == "propagated" and all(v.passed for v in vs):
            sb = max(v.strip_bound for v in vs)
            bounds.append(norm * math.exp(sb / (2 * h)))
        else:
            if status == "propagated":
                status = "a-priori (comparison fails)"
            bounds.append(norm)
        statuses.append(status)
        verdicts.append(vs)
    return bounds, statuses, verdicts


def conclude_vanishing(f: PotentialGrid, barrier: BarrierFunction, h_list: Sequence[float],
                       x2_list: Sequence[float] = (-0.16, -0.08, 0.0, 0.08, 0.16), r: float = 1.0,
                       tol: float = 1e-6, n_boundary: int = 400) -> VanishingReport:
    """Strip bounds over ``h_list`` and their extrapolation to ``h -> 0``.

    The fit is ``log B = alpha + beta/h``; the limit is 0 when ``beta < 0``,
    ``exp(alpha)`` when ``beta == 0`` and infinite otherwise.  Bounds that
    grow as h decreases make a small limit ``inconclusive``.  ``direct`` holds
    ``max (2 pi h)^{-1}|Tf|`` on the real strip points for comparison.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError("need at least three values of h")
    if any(b <= a for a, b in zip(h_list[1:], h_list[:-1])):
        raise ValueError("h_list must be strictly decreasing")
    bounds, statuses, verdicts = strip_bounds(f, barrier, h_list, x2_list, r, n_boundary)
    norm = f.sup_norm
    delta = barrier.delta
    xs = np.linspace(-delta, delta, 21)
    direct = []
    for h in h_list:
        if f.is_zero:
            direct.append(0.0)
            continue
        z = np.array([[x, x2] for x in xs for x2 in x2_list], dtype=complex)
        direct.append(float(np.max(np.exp(transform_many(f, z, h).log_mod)) / (2 * math.pi * h)))
    if f.is_zero:
        return VanishingReport(h_list, bounds, statuses, 0.0, 0.0, direct, None, "zero", verdicts)
    monotone = all(b2 <= b1 * (1 + 1e-12) for b1, b2 in zip(bounds, bounds[1:]))
    if statuses[-1].startswith("a-priori"):
        limit = norm
        h_tol = None
    else:
        logs = np.log(np.maximum(bounds, 1e-300))
        A = np.column_stack([np.ones(len(h_list)), 1.0 / np.asarray(h_list)])
        (alpha, beta), *_ = np.linalg.lstsq(A, logs, rcond=None)
        if beta < 0:
            limit = 0.0
            target = math.log(tol * norm)
            h_tol = float(beta / (target - alpha)) if target < alpha else float(h_list[0])
        elif beta == 0:
            limit, h_tol = float(math.exp(alpha)), None
        else:
            limit, h_tol = math.inf, None
    if limit > tol * norm:
        status = "not vanishing"
    else:
        status = "ok" if monotone else "inconclusive"
    return VanishingReport(h_list, bounds, statuses, float(limit), norm, direct, h_tol, status, verdicts)
