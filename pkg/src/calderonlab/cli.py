"""Command-line experiment runner.

Each subcommand reads an optional JSON config, fills in desk-scale
defaults, runs one verification pipeline and writes a JSON report plus CSV
plot data.  Exit status: 0 when every asserted property holds, 1 when one
fails (the report is still written), 2 for an invalid config.
"""

from __future__ import annotations

import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_cap() -> None:
    cap = os.environ.get("CALDERONLAB_THREADS")
    if cap:
        for var in _THREAD_VARS:
            os.environ[var] = cap


# must run before numpy loads its BLAS
_apply_thread_cap()

import argparse  # noqa: E402
import copy  # noqa: E402
import csv  # noqa: E402
import datetime  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402

SCHEMA_VERSION = 1
SUBCOMMANDS = ("solve", "cgo-decay", "moment-identity", "bargmann-map", "watermelon", "runge", "reconstruct")
TANGENT_DISC = {"shape": "circle", "radius": 1.0, "center": [-1.0, 0.0]}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
def _plain(obj):
    """Convert numpy scalars/arrays, complex numbers and tuples to JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = "%.17g" % x
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and non-finite floats
    as strings."""
    obj = _plain(obj) if _level == 0 else obj
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    return json.dumps(obj)


def config_hash(config: dict) -> str:
    text = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([("%.17g" % v) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# defaults and validation
# ---------------------------------------------------------------------------
DEFAULTS = {
    "solve": {
        "domain": {"shape": "circle", "M": 256},
        "modes": [[0, "cos"], [1, "cos"], [3, "cos"], [5, "sin"]],
        "n_interior": 2000,
        "n_green_pairs": 100,
        "tol": 1e-8,
    },
    "cgo-decay": {
        "domain": {**TANGENT_DISC, "M": 1024},
        "c": 0.2,
        "a_list": [1.0, 2.0],
        "h_list": [0.4, 0.25, 0.15],
        "slope_tol": 0.05,
        "n_radial": 64,
    },
    "moment-identity": {
        "domain": {**TANGENT_DISC, "M": 512},
        "c": 0.2,
        "n_samples": 5,
        "a_range": [0.5, 1.5],
        "h_range": [0.25, 0.5],
        "epsilon": 0.01,
        "f_grid": [40, 256],
        "reference_grid": [64, 384],
        "identity_tol": 1e-8,
        "estimate": {"a": 1.0, "h_list": [0.4, 0.25, 0.15], "center": [-0.3, 0.0], "spread": 0.05,
                     "slope_tol": 0.05},
    },
    "bargmann-map": {
        "domain": {**TANGENT_DISC, "M": 256},
        "f_grid": [32, 128],
        "bump": {"center": [-1.0, 0.0], "radius": 0.9},
        "h": 0.25,
        "re_range": [-2.0, 2.0],
        "im_range": [-2.0, 2.0],
        "shape": [41, 41],
        "halfspace_h_list": [0.5, 0.25, 0.1],
        "halfspace_re_range": [0.0, 2.0],
        "halfspace_im_range": [-1.0, 1.0],
        "superposition": {"h": 0.2, "t_split": 0.4, "z_re": [[8.0, 0.0], [8.0, 0.5]], "z_im": [[0.0, 0.0], [0.0, 0.3]]},
        "improved": {"c": 0.2, "epsilon": 0.012, "h_list": [0.4, 0.25, 0.15],
                     "surrogate": {"center": [-0.4, 0.0], "radius": 0.3}},
        "tol": 1e-8,
    },
    "watermelon": {
        "delta": 0.05,
        "R": 10.0,
        "L": 2.0,
        "b": 0.5,
        "c": 0.2,
        "r": 1.0,
        "M": 512,
        "M_hole": 256,
        "toy_h": 0.1,
        "mp_tol": 1e-8,
        "hopf_stability": 0.02,
        "vanishing": {
            "h_list": [0.2, 0.1, 0.05, 0.02, 0.01],
            "potential": {"center": [-0.4, 0.0], "radius": 0.3},
            "box": {"lo": [-0.7, -0.3], "hi": [-0.1, 0.3], "panels": 8, "order": 12},
            "tol": 1e-6,
        },
    },
    "runge": {
        "M1": 1024,
        "M2": 512,
        "depth": 0.3,
        "halfwidth": 1.0,
        "counts": [200, 400, 800],
        "lambda": 0.0,
        "pole": 0.85,
        "k": 3,
        "tol": 1e-3,
        "test_bump": {"center": [-0.2, 0.1], "radius": 0.5},
        "identity_tol": 1e-6,
    },
    "reconstruct": {
        "domain": {**TANGENT_DISC, "M": 768},
        "c": 0.75,
        "grid": {"lo": [-2.0, -1.0], "hi": [0.0, 1.0], "shape": [16, 16]},
        "phantom": {"type": "bump", "center": [-1.0, 0.0], "radius": 0.9, "amplitude": 1.0},
        "k_max": 8.0,
        "n_per_axis": 20,
        "h": 1.0,
        "lambda": None,
        "noise_level": 1e-8,
        "tau": 1.5,
        "added_noise": 0.0,
        "tol": 0.1,
    },
}


def _merge(base: dict, over: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        name = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(name, "unknown field")
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("domain", "phantom"):
            out[k] = _merge(base[k], v, name + ".")
        else:
            out[k] = v
    return out


def _num(cfg: dict, key: str, name: str, lo=None, hi=None, lo_open=False, integer=False):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(name, f"expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(name, f"expected an integer, got {v!r}")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(name, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(name, f"must be <= {hi}, got {v}")
    return int(v) if integer else float(v)


def _h_list(cfg: dict, key: str, name: str, minimum: int = 3):
    v = cfg[key]
    if not isinstance(v, list) or len(v) < minimum:
        raise ConfigError(name, f"expected a list of at least {minimum} values")
    for i, x in enumerate(v):
        _num({"x": x}, "x", f"{name}[{i}]", 0, 1, lo_open=True)
    if any(b >= a for a, b in zip(v, v[1:])):
        raise ConfigError(name, "must be strictly decreasing")
    return [float(x) for x in v]


def _scaled_M(M, scale, name):
    M = int(round(M * scale))
    M += M % 2
    if M < 64:
        raise ConfigError(name, f"resolution-scaled M = {M} is below 64")
    return M


def _domain(cfg: dict, scale: float, name: str = "domain"):
    from .geometry import make_domain

    spec = dict(cfg)
    if "shape" not in spec:
        raise ConfigError(name + ".shape", "missing")
    M = _scaled_M(_num(spec, "M", name + ".M", 64, integer=True) if "M" in spec else 256, scale, name + ".M")
    spec.pop("M", None)
    try:
        return make_domain(spec, M)
    except ValueError as exc:
        raise ConfigError(name, str(exc)) from None


def _scaled(n, scale):
    return max(4, int(round(n * scale)))


def validate(sub: str, cfg: dict) -> None:
    """Field-level checks that do not need the heavy objects."""
    if sub in ("cgo-decay", "moment-identity", "bargmann-map", "reconstruct"):
        _domain(cfg["domain"], 1.0)
    if sub == "solve":
        for i, m in enumerate(cfg["modes"]):
            if not (isinstance(m, list) and len(m) == 2 and m[1] in ("cos", "sin")):
                raise ConfigError(f"modes[{i}]", "expected [k, 'cos'|'sin']")
            _num({"k": m[0]}, "k", f"modes[{i}][0]", 0, integer=True)
        _num(cfg, "n_interior", "n_interior", 1, integer=True)
        _num(cfg, "n_green_pairs", "n_green_pairs", 1, integer=True)
        _num(cfg, "tol", "tol", 0, lo_open=True)
    elif sub == "cgo-decay":
        _num(cfg, "c", "c", 0, lo_open=True)
        _h_list(cfg, "h_list", "h_list")
        if not cfg["a_list"]:
            raise ConfigError("a_list", "empty")
        for i, a in enumerate(cfg["a_list"]):
            _num({"a": a}, "a", f"a_list[{i}]", 0, lo_open=True)
    elif sub == "moment-identity":
        _num(cfg, "c", "c", 0, lo_open=True)
        _num(cfg, "n_samples", "n_samples", 0, integer=True)
        _num(cfg, "epsilon", "epsilon", 0, lo_open=True)
        _h_list(cfg["estimate"], "h_list", "estimate.h_list")
        for key in ("a_range", "h_range"):
            lo, hi = cfg[key]
            if not 0 < lo <= hi:
                raise ConfigError(key, "expected 0 < lo <= hi")
        if cfg["h_range"][1] > 1:
            raise ConfigError("h_range", "h must lie in (0, 1]")
    elif sub == "bargmann-map":
        _num(cfg, "h", "h", 0, 1, lo_open=True)
        _h_list(cfg, "halfspace_h_list", "halfspace_h_list", 1)
        if cfg["improved"] is not None:
            _h_list(cfg["improved"], "h_list", "improved.h_list")
    elif sub == "watermelon":
        _num(cfg, "delta", "delta", 0, lo_open=True)
        _num(cfg, "toy_h", "toy_h", 0, 1, lo_open=True)
        _num(cfg, "M", "M", 64, integer=True)
        if cfg["vanishing"] is not None:
            _h_list(cfg["vanishing"], "h_list", "vanishing.h_list")
    elif sub == "runge":
        counts = cfg["counts"]
        if not counts or any(int(c) != c or c < 1 for c in counts) or sorted(counts) != counts:
            raise ConfigError("counts", "expected increasing positive integers")
        _num(cfg, "lambda", "lambda", 0)
        if not 0 <= abs(complex(cfg["pole"])) < 1:
            raise ConfigError("pole", "must lie inside the unit disc")
    elif sub == "reconstruct":
        _num(cfg, "c", "c", 0, lo_open=True)
        _num(cfg, "h", "h", 0, 1, lo_open=True)
        _num(cfg, "n_per_axis", "n_per_axis", 1, integer=True)
        _num(cfg, "noise_level", "noise_level", 0)
        _num(cfg, "added_noise", "added_noise", 0)
        if cfg["lambda"] is not None:
            _num(cfg, "lambda", "lambda", 0, lo_open=True)
        if cfg["phantom"].get("type") not in ("bump", "zero"):
            raise ConfigError("phantom.type", "expected 'bump' or 'zero'")


# ---------------------------------------------------------------------------
# subcommands; each returns (results, passed, csv files)
# ---------------------------------------------------------------------------
def run_solve(cfg, seed, scale, out):
    from .laplace import GreenKernel, solve_dirichlet

    dom = _domain(cfg["domain"], scale)
    if dom.label != "circle":
        raise ConfigError("domain.shape", "the solver oracles need a circle")
    c = dom.center
    R = float(np.mean(np.linalg.norm(dom.points - c, axis=1)))
    rng = np.random.default_rng(seed)
    n = cfg["n_interior"]
    r = np.sqrt(rng.uniform(0, 1, n)) * 0.999
    a = rng.uniform(0, 2 * np.pi, n)
    X = c + R * np.column_stack([r * np.cos(a), r * np.sin(a)])
    th = np.arctan2(*(dom.points - c)[:, ::-1].T)
    rows, modes = [], []
    for k, kind in cfg["modes"]:
        trig = np.cos if kind == "cos" else np.sin
        u = solve_dirichlet(dom, trig(k * th))
        err = float(np.max(np.abs(u(X) - r**k * trig(k * a))))
        modes.append({"k": k, "kind": kind, "max_error": err})
        rows.append([k, kind, err])
    npair = cfg["n_green_pairs"]
    rp = np.sqrt(rng.uniform(0, 0.9**2, (2, npair)))
    tp = rng.uniform(0, 2 * np.pi, (2, npair))
    p = c + R * np.stack([rp * np.cos(tp), rp * np.sin(tp)], axis=-1)
    G = GreenKernel(dom)
    xs, ys = p[0], p[1]
    num = np.array([G.matrix(xs[i:i + 1], ys[i:i + 1], warn=False)[0, 0] for i in range(npair)])
    xz = ((xs - c) @ [1, 1j]) / R
    yz = ((ys - c) @ [1, 1j]) / R
    exact = -np.log(np.abs((xz - yz) / (1 - np.conj(xz) * yz))) / (2 * np.pi)
    gerr = float(np.max(np.abs(num - exact)))
    _write_csv(out / "solve_modes.csv", ["k", "kind", "max_error"], rows)
    worst = max(m["max_error"] for m in modes)
    results = {"modes": modes, "green_max_error": gerr, "M": dom.M}
    return results, bool(worst <= cfg["tol"] and gerr <= cfg["tol"])


def run_cgo_decay(cfg, seed, scale, out):
    from .cgo import CutoffSpec, gamma, verify_w_bound

    dom = _domain(cfg["domain"], scale)
    chi = CutoffSpec(cfg["c"])
    h_list = _h_list(cfg, "h_list", "h_list")
    reports, rows = [], []
    for a in cfg["a_list"]:
        rep = verify_w_bound(dom, gamma(a), chi, h_list, cfg["slope_tol"], n_radial=_scaled(cfg["n_radial"], scale))
        d = rep.to_dict()
        d["a"] = a
        reports.append(d)
        rows += [[a, h, v] for h, v in zip(rep.h_list, rep.log_norms)]
    _write_csv(out / "cgo_decay.csv", ["a", "h", "log_h1_norm"], rows)
    return {"rays": reports}, all(r["pass"] for r in reports)


def run_moment_identity(cfg, seed, scale, out):
    from .cgo import CutoffSpec, build_corrected_exponential, null_decompose_near
    from .pairing import PotentialGrid, moment_identity, random_smooth_potential, verify_fourier_estimate

    dom = _domain(cfg["domain"], scale)
    chi = CutoffSpec(cfg["c"])
    rng = np.random.default_rng(seed)
    nr, na = (_scaled(v, scale) for v in cfg["f_grid"])
    rr, ra = (_scaled(v, scale) for v in cfg["reference_grid"])
    samples, rows = [], []
    for i in range(cfg["n_samples"]):
        fn = random_smooth_potential(rng)
        f = PotentialGrid.on_domain(dom, fn, n_radial=nr, n_angular=na)
        ref = PotentialGrid.on_domain(dom, fn, n_radial=rr, n_angular=ra)
        a = rng.uniform(*cfg["a_range"])
        h = rng.uniform(*cfg["h_range"])
        eps = cfg["epsilon"]
        d = rng.normal(size=2) + 1j * rng.normal(size=2)
        d *= eps * a / np.linalg.norm(d)
        zeta, eta, _ = null_decompose_near(np.array([2j * a, 0]) + d, a)
        res = moment_identity(f, build_corrected_exponential(dom, zeta, h, chi),
                              build_corrected_exponential(dom, eta, h, chi), ref)
        samples.append({"a": a, "h": h, "relative": res["relative"], "abs_residual": res["abs_residual"]})
        rows.append([i, a, h, res["relative"]])
    _write_csv(out / "moment_identity.csv", ["sample", "a", "h", "relative_residual"], rows)
    est = cfg["estimate"]
    f = PotentialGrid.on_domain(dom, random_smooth_potential(rng, center=tuple(est["center"]), spread=est["spread"]),
                                n_radial=nr, n_angular=na)
    rep = verify_fourier_estimate(f, dom, chi, est["a"], cfg["epsilon"], _h_list(est, "h_list", "estimate.h_list"),
                                  slope_tol=est["slope_tol"])
    worst = max((s["relative"] for s in samples), default=0.0)
    results = {"samples": samples, "worst_relative": worst, "fourier_estimate": rep.to_dict()}
    return results, bool(worst <= cfg["identity_tol"] and rep.passed)


def _z_list(sp):
    re, im = np.asarray(sp["z_re"], float), np.asarray(sp["z_im"], float)
    if re.shape != im.shape or re.ndim != 2:
        raise ConfigError("superposition.z_re", "z_re and z_im must be equal-shape lists of points")
    return re + 1j * im


def run_bargmann_map(cfg, seed, scale, out):
    from scipy.special import erfc

    from .bargmann import (BargmannGrid, cauchy_riemann_residual, check_apriori_bound, check_halfspace_bound,
                           check_improved_bound, minimal_admissible_a, superposed_transform, transform)
    from .pairing import PotentialGrid, random_smooth_potential, smooth_bump

    dom = _domain(cfg["domain"], scale)
    nr, na = (_scaled(v, scale) for v in cfg["f_grid"])
    tol = cfg["tol"]
    bump = PotentialGrid.on_domain(dom, lambda p: smooth_bump(p, cfg["bump"]["center"], cfg["bump"]["radius"]),
                                   n_radial=nr, n_angular=na)
    grid = BargmannGrid.slice(bump, cfg["h"], cfg["re_range"], cfg["im_range"], tuple(cfg["shape"]))
    grid.to_csv(out / "bargmann_bump.csv")
    apri = check_apriori_bound(grid, tol)
    cr, cr_scale = cauchy_riemann_residual(grid)
    ok = apri.passed
    results = {"apriori": {"worst_slack": apri.worst_slack, "pass": apri.passed},
               "cauchy_riemann": {"residual": cr, "step_squared": cr_scale}}
    ind = PotentialGrid.halfline_indicator()
    half = []
    for h in cfg["halfspace_h_list"]:
        g = BargmannGrid.slice(ind, h, cfg["halfspace_re_range"], cfg["halfspace_im_range"], tuple(cfg["shape"]))
        z = g.z_nodes[:, 0]
        oracle = np.sqrt(2 * np.pi * h) * 0.5 * erfc(z / np.sqrt(2 * h))
        err = float(np.max(np.abs(g.values.to_complex() / oracle - 1)))
        rep = check_halfspace_bound(g, tol)
        half.append({"h": h, "erfc_relative_error": err, "worst_slack": rep.worst_slack, **rep.extra})
        ok &= rep.passed and err <= tol
        g.to_csv(out / f"bargmann_halfline_h{h:g}.csv")
    results["halfspace"] = half
    sp = cfg["superposition"]
    f = PotentialGrid.on_domain(dom, random_smooth_potential(np.random.default_rng(seed)), n_radial=nr, n_angular=na)
    sup = []
    for z in _z_list(sp):
        s = superposed_transform(f, z, sp["h"], sp["t_split"])
        d = transform(f, z, sp["h"])
        rel = float(abs((s.total() / d).to_complex() - 1))
        sup.append({"z": z, "relative": rel, "tail_log": float(s.tail.log_mod),
                    "tail_bound_log": float(s.tail_bound.log_mod)})
        ok &= rel <= tol
    results["superposition"] = sup
    if cfg["improved"] is not None:
        im = cfg["improved"]
        sur = PotentialGrid.on_domain(
            dom, lambda p: smooth_bump(p, im["surrogate"]["center"], im["surrogate"]["radius"]),
            n_radial=nr, n_angular=na)
        a = minimal_admissible_a(im["c"], im["epsilon"])
        rep = check_improved_bound(sur, im["c"], a, im["epsilon"], _h_list(im, "h_list", "improved.h_list"))
        results["improved"] = {"a": a, "pass": rep.passed, **rep.extra}
        ok &= rep.passed
    return results, bool(ok)


def run_watermelon(cfg, seed, scale, out):
    from .pairing import PotentialGrid, smooth_bump
    from .watermelon import (build_barrier, check_harnack, check_hopf, conclude_vanishing, propagate_decay,
                             smallest_delta_with_decay, toy_log_abs)

    M, Mh = _scaled_M(cfg["M"], scale, "M"), _scaled_M(cfg["M_hole"], scale, "M_hole")
    geo = dict(R=cfg["R"], L=cfg["L"], b=cfg["b"], c=cfg["c"])
    try:
        bar = build_barrier(cfg["delta"], **geo, M=M, M_hole=Mh)
    except ValueError as exc:
        raise ConfigError("delta", str(exc)) from None
    bar.to_csv(out / "watermelon_barrier.csv")
    slack = bar.max_principle_slack(rng=seed)
    hopf = check_hopf(bar, cfg["r"])
    hopf2 = check_hopf(bar.refined(), cfg["r"])
    change = abs(hopf2.minimum / hopf.minimum - 1) if hopf.minimum != 0 else math.inf
    harnack = check_harnack(bar, cfg["r"])
    verdict = propagate_decay(toy_log_abs(cfg["c"], cfg["toy_h"]), cfg["toy_h"], bar, cfg["r"])
    results = {
        "max_principle_slack": slack,
        "hopf": hopf.to_dict(),
        "hopf_refinement_change": change,
        "harnack": harnack.to_dict(),
        "toy": verdict.to_dict(),
    }
    ok = slack <= cfg["mp_tol"] and hopf.positive and change <= cfg["hopf_stability"]
    ok = ok and verdict.passed and verdict.c_prime > 0
    van = cfg["vanishing"]
    if van is not None:
        bar2, cp, hist = smallest_delta_with_decay(delta0=cfg["delta"], r=cfg["r"], M=M, M_hole=Mh, **geo)
        box = van["box"]
        pot = van["potential"]
        f = PotentialGrid.on_box(lambda p: smooth_bump(p, pot["center"], pot["radius"]), box["lo"], box["hi"],
                                 panels=box["panels"], order=box["order"])
        rep = conclude_vanishing(f, bar2, _h_list(van, "h_list", "vanishing.h_list"), r=cfg["r"], tol=van["tol"])
        results["vanishing"] = {"delta": bar2.delta, "c_prime": cp, "halving_history": hist, **rep.to_dict()}
        _write_csv(out / "watermelon_strip_bounds.csv", ["h", "bound", "direct", "status"],
                   zip(rep.h_list, rep.bounds, rep.direct, rep.statuses))
        ok = ok and rep.status in ("ok", "zero")
    return results, bool(ok)


def run_runge(cfg, seed, scale, out):
    from .pairing import smooth_bump
    from .runge import automorphism_target, convergence_table, standard_pair, table_to_csv, \
        verify_orthogonality_identity

    pair = standard_pair(_scaled_M(cfg["M1"], scale, "M1"), _scaled_M(cfg["M2"], scale, "M2"),
                         cfg["depth"], cfg["halfwidth"], seed=seed)
    counts = [int(c) for c in cfg["counts"]]
    if counts[-1] > len(pair.sources):
        raise ConfigError("counts", f"at most {len(pair.sources)} source nodes are available")
    u = automorphism_target(complex(cfg["pole"]), int(cfg["k"]), pair.omega1)
    rows = convergence_table(pair, u, counts, cfg["lambda"])
    table_to_csv(rows, out / "runge_convergence.csv")
    errs = [r.l2_error for r in rows]
    monotone = all(b <= a * (1 + 1e-9) + 1e-300 for a, b in zip(errs, errs[1:]))
    tb = cfg["test_bump"]
    ident = verify_orthogonality_identity(pair, lambda x: smooth_bump(x, tb["center"], tb["radius"]), u)
    results = {
        "n_shared_nodes": int(pair.shared.sum()),
        "n_candidate_sources": len(pair.sources),
        "shared_intervals": pair.shared_intervals(),
        "table": [{"n_sources": r.n_sources, "l2_error": r.l2_error, "relative_error": r.relative_error}
                  for r in rows],
        "non_increasing": monotone,
        "identity": ident,
    }
    ok = monotone and rows[-1].relative_error <= cfg["tol"] and ident["relative"] <= cfg["identity_tol"]
    return results, bool(ok)


def run_reconstruct(cfg, seed, scale, out):
    from .cgo import CutoffSpec
    from .pairing import GridSpec, compute_moments, frequency_pairs, reconstruct, relative_l2_error, smooth_bump

    dom = _domain(cfg["domain"], scale)
    g = cfg["grid"]
    gs = GridSpec(tuple(g["lo"]), tuple(g["hi"]), tuple(g["shape"]))
    ph = cfg["phantom"]
    if ph["type"] == "zero":
        truth = lambda p: np.zeros(len(p))  # noqa: E731
    else:
        truth = lambda p: smooth_bump(p, ph["center"], ph["radius"], ph.get("amplitude", 1.0))  # noqa: E731
    f = gs.potential(dom, truth)
    zs, es = frequency_pairs(cfg["k_max"], cfg["n_per_axis"], cfg["h"])
    ms = compute_moments(f, dom, CutoffSpec(cfg["c"]), zs, es, cfg["h"])
    if cfg["added_noise"] > 0:
        rng = np.random.default_rng(seed)
        scale_m = cfg["added_noise"] * np.linalg.norm(ms.values) / math.sqrt(2 * len(ms.values))
        ms.values = ms.values + scale_m * (rng.normal(size=len(ms.values)) + 1j * rng.normal(size=len(ms.values)))
    fhat, info = reconstruct(ms, gs, dom, cfg["lambda"], cfg["noise_level"], cfg["tau"])
    err = relative_l2_error(fhat, truth)
    ref = truth(fhat.nodes)
    _write_csv(out / "reconstruct_grid.csv", ["x1", "x2", "truth", "estimate_re", "estimate_im"],
               ([p[0], p[1], float(t), float(v.real), float(v.imag)] for p, t, v in zip(fhat.nodes, ref, fhat.values)))
    results = {
        "n_moments": len(ms.values),
        "relative_l2_error": err,
        "max_abs_estimate": float(np.max(np.abs(fhat.values))),
        "lambda": info.lam,
        "lambda_rule": info.chosen_by,
        "residual": info.residual,
        "condition": info.normal_condition,
    }
    return results, bool(err <= cfg["tol"])


RUNNERS = {
    "solve": run_solve,
    "cgo-decay": run_cgo_decay,
    "moment-identity": run_moment_identity,
    "bargmann-map": run_bargmann_map,
    "watermelon": run_watermelon,
    "runge": run_runge,
    "reconstruct": run_reconstruct,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calderonlab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="JSON file overriding the default settings")
    p.add_argument("--out", type=Path, default=Path("calderonlab-out"), help="output directory")
    p.add_argument("--seed", type=int, default=0, help="random seed (u64)")
    p.add_argument("--resolution-scale", type=float, default=1.0,
                   help="multiplies boundary node counts and quadrature sizes")
    return p


def resolve_config(sub: str, path=None) -> dict:
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config", "top level must be an object")
        user = dict(user)
        named = user.pop("subcommand", sub)
        if named != sub:
            raise ConfigError("subcommand", f"config is for {named!r}, not {sub!r}")
    cfg = _merge(DEFAULTS[sub], user)
    validate(sub, cfg)
    return cfg


def run(sub: str, cfg: dict, seed: int, scale: float, out: Path) -> tuple:
    """Run one subcommand and write its report; returns ``(exit_code, report)``."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    error = None
    try:
        results, passed = RUNNERS[sub](cfg, seed, scale, out)
    except ConfigError:
        raise
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        results, passed, error = {}, False, f"{type(exc).__name__}: {exc}"
    report = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": sub,
        "config_sha256": config_hash({"config": cfg, "resolution_scale": scale}),
        "seed": seed,
        "resolution_scale": scale,
        "config": cfg,
        "results": results,
        "error": error,
        "pass": bool(passed),
        "metadata": {
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "runtime_seconds": time.perf_counter() - t0,
            "version": __version__,
        },
    }
    (out / f"{sub}.json").write_text(dumps(report) + "\n")
    return (0 if passed else 1), report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if not (math.isfinite(args.resolution_scale) and args.resolution_scale > 0):
            raise ConfigError("resolution-scale", "must be a positive number")
        cfg = resolve_config(args.subcommand, args.config)
        code, report = run(args.subcommand, cfg, args.seed, args.resolution_scale, args.out)
    except ConfigError as exc:
        print(f"calderonlab: invalid config: {exc}", file=sys.stderr)
        return 2
    status = "PASS" if code == 0 else "FAIL"
    print(f"{args.subcommand}: {status} -> {args.out / (args.subcommand + '.json')}")
    if report["error"]:
        print(report["error"], file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
