import csv
import math

import numpy as np
import pytest

from calderonlab.runge import (
    automorphism_target,
    convergence_table,
    green_superposition,
    runge_approximate,
    standard_pair,
    table_to_csv,
    verify_orthogonality_identity,
)


@pytest.fixture(scope="module")
def pair():
    return standard_pair(M1=1024, M2=512, n_radial=32)


def disc_green(x, y):
    """Green's function of the unit disc with ``-Lap G = delta``."""
    x = np.asarray(x)
    y = np.asarray(y)
    ys = y / np.dot(y, y)
    r = np.linalg.norm(x - y, axis=-1)
    rs = np.linalg.norm(x - ys, axis=-1)
    return -(np.log(r) - np.log(np.linalg.norm(y) * rs)) / (2 * math.pi)


def test_shared_arc_found(pair):
    assert pair.shared.any() and not pair.shared.all()
    assert len(pair.shared_intervals()) >= 1


def test_sources_outside_inner_domain(pair):
    assert not pair.omega1.contains(pair.sources).any()
    assert pair.omega2.contains(pair.sources).all()


def test_zero_amplitudes_give_zero(pair):
    u = green_superposition(pair, np.zeros(5))
    assert np.all(u.evaluate(np.array([[0.0, 0.0], [-0.5, 0.2]])) == 0)


def test_single_source_matches_image_formula(pair):
    y = pair.sources[0]
    u = green_superposition(pair, [1.0])
    x = np.array([[-0.3, 0.1], [0.0, -0.6], [-0.8, 0.0]])
    assert np.allclose(u.evaluate(x).real, disc_green(x, y), atol=1e-10)


def test_superposition_vanishes_on_shared_arc(pair):
    rng = np.random.default_rng(0)
    u = green_superposition(pair, rng.normal(size=40))
    assert u.shared_residual() <= 1e-8


def test_in_span_target_recovered(pair):
    amps = np.array([1.0, -0.5, 0.25])
    tgt = green_superposition(pair, amps)
    res = runge_approximate(pair, tgt, lam=0.0, n_sources=20)
    assert res.relative_error < 1e-12
    assert np.allclose(res.amplitudes[:3], amps, atol=1e-8)
    # Tikhonov bias grows with lambda
    errs = [runge_approximate(pair, tgt, lam=lam, n_sources=20).relative_error for lam in (1e-14, 1e-12)]
    assert res.relative_error < errs[0] < errs[1] < 1e-4


def test_zero_target_with_regularization(pair):
    res = runge_approximate(pair, lambda p: np.zeros(len(p)), lam=1e-3, n_sources=10)
    assert np.all(res.amplitudes == 0)
    assert res.l2_error == 0


def test_rejects_target_not_vanishing_on_shared_arc(pair):
    with pytest.raises(ValueError, match="shared"):
        runge_approximate(pair, lambda p: np.ones(len(p)), n_sources=10)


def test_rejects_negative_lambda(pair):
    with pytest.raises(ValueError, match="lambda"):
        runge_approximate(pair, automorphism_target(0.85), lam=-1.0)


def test_automorphism_target_vanishes_on_circle():
    t = automorphism_target(0.85, k=3)
    th = np.linspace(0, 2 * np.pi, 50)
    pts = np.column_stack([np.cos(th), np.sin(th)])
    assert np.max(np.abs(t.evaluate(pts))) < 1e-10


def test_table_monotone_and_csv(pair, tmp_path):
    rows = convergence_table(pair, automorphism_target(0.85), counts=(50, 100, 200))
    errs = [r.relative_error for r in rows]
    assert errs[0] >= errs[1] >= errs[2]
    path = tmp_path / "table.csv"
    table_to_csv(rows, path)
    with open(path) as fh:
        got = list(csv.DictReader(fh))
    assert [int(r["n_sources"]) for r in got] == [50, 100, 200]
    assert float(got[2]["relative_error"]) == errs[2]


def test_identity_with_zero_source(pair):
    u = automorphism_target(0.85)
    out = verify_orthogonality_identity(pair, lambda p: np.zeros(len(p)), u)
    assert out["lhs"] == 0 and out["rhs"] == 0
