import math

import numpy as np
import pytest

from calderonlab.pairing import PotentialGrid
from calderonlab.watermelon import (
    BarrierRegion,
    HypothesisViolation,
    annulus_solution,
    build_barrier,
    check_harnack,
    check_hopf,
    conclude_vanishing,
    propagate_decay,
    toy_log_abs,
)

DELTA = 0.05


@pytest.fixture(scope="module")
def barrier():
    return build_barrier(DELTA, c=0.2, M=256, M_hole=128)


def test_region_validation():
    with pytest.raises(ValueError):
        BarrierRegion(0.0)
    with pytest.raises(ValueError):
        BarrierRegion(0.05, L=0.4, b=0.5)
    with pytest.raises(ValueError):
        BarrierRegion(0.05, R=2.0)


def test_region_random_points_inside():
    reg = BarrierRegion(DELTA)
    pts = reg.random_points(500, 3)
    assert len(pts) == 500
    assert reg.contains(pts).all()


def test_equal_data_gives_constant():
    c = -4 * DELTA**2
    bar = build_barrier(DELTA, c=c, M=128, M_hole=64)
    pts = bar.region.random_points(200, 0)
    assert np.allclose(bar(pts), 4 * DELTA**2, atol=1e-12)
    assert check_hopf(bar).minimum == pytest.approx(0.0, abs=1e-10)


def test_maximum_principle(barrier):
    assert barrier.max_principle_slack(n=1000, rng=1) <= 1e-10


def test_boundary_values(barrier):
    reg = barrier.region
    outer, circ = reg.boundary_samples(400)
    # stay away from the arc and cut corners
    inner = outer[np.abs(outer.imag) < 0.9 * reg.R] + 1e-3
    assert np.allclose(barrier(reg.L + (reg.b + 1e-4) * np.exp(1j * np.linspace(0, 6, 20))), barrier.B, atol=1e-2)
    assert np.all(np.abs(barrier(inner[inner.real < reg.x_cut + 1]) - barrier.A) < 0.05)


def test_annulus_matches_log_profile():
    R, b, A, B = 3.0, 0.5, 1.0, -2.0
    u = annulus_solution(R, b, A, B, center=(1.0, 0.5))
    r = np.array([0.7, 1.2, 2.5])
    s = 1.0 + 0.5j + r * np.exp(0.3j)
    exact = B + (A - B) * np.log(r / b) / math.log(R / b)
    assert np.allclose(u(s), exact, atol=1e-10)


def test_hopf_positive_and_scales_with_c():
    mins = [check_hopf(build_barrier(DELTA, c=c, M=256, M_hole=128)).minimum for c in (0.1, 0.2, 0.4)]
    assert all(m > 0 for m in mins)
    # affine in c at fixed delta
    assert (mins[2] - mins[1]) == pytest.approx(2 * (mins[1] - mins[0]), rel=1e-8)


def test_hopf_probe_range(barrier):
    with pytest.raises(ValueError, match="corner"):
        check_hopf(barrier, r=barrier.region.R)


def test_harnack_anchor(barrier):
    rep = check_harnack(barrier)
    assert not rep.degenerate
    assert rep.anchor_deviation <= 5 * DELTA**2
    assert rep.scaled_ratio_min > 0
    assert rep.ratio_min <= rep.ratio_max


def test_harnack_degenerate_guard():
    bar = build_barrier(DELTA, c=-4 * DELTA**2, M=128, M_hole=64)
    rep = check_harnack(bar)
    assert rep.degenerate
    assert math.isnan(rep.ratio_min)


def test_toy_function_passes(barrier):
    v = propagate_decay(toy_log_abs(0.2, 0.1), 0.1, barrier)
    assert v.passed
    assert v.max_slack <= 1e-9
    d = v.to_dict()
    assert set(d) >= {"delta", "c", "c_prime", "max_slack", "pass"}


def test_identically_zero_function_passes(barrier):
    v = propagate_decay(lambda s: np.full(np.shape(s), -np.inf), 0.1, barrier)
    assert v.passed
    assert v.to_dict()["max_slack"] == "-inf"


def test_growing_toy_violates_hypothesis(barrier):
    def log_abs(s):
        s = np.asarray(s, dtype=complex)
        return ((s**2).real - 0.2) / 0.2

    with pytest.raises(HypothesisViolation) as exc:
        propagate_decay(log_abs, 0.1, barrier)
    assert exc.value.sample["hypothesis"] in {"growth", "decay"}


def test_strip_maximum_decreases_with_c():
    cps = [-build_barrier(DELTA, c=c, M=256, M_hole=128)(np.linspace(-DELTA, DELTA, 5)).max()
           for c in (0.1, 0.2, 0.4)]
    assert cps[0] < cps[1] < cps[2]


def test_vanishing_zero_potential(barrier):
    rep = conclude_vanishing(PotentialGrid.zero(), barrier, [0.2, 0.1, 0.05])
    assert rep.limit == 0.0
    assert rep.status == "zero"
    assert rep.bounds == [0.0, 0.0, 0.0]


def test_vanishing_h_list_validation(barrier):
    with pytest.raises(ValueError, match="decreasing"):
        conclude_vanishing(PotentialGrid.zero(), barrier, [0.05, 0.1, 0.2])
    with pytest.raises(ValueError, match="three"):
        conclude_vanishing(PotentialGrid.zero(), barrier, [0.2, 0.1])
