import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exitmc import Annulus, Ball, EulerMaruyama, Integrand, Partition, SimParams, WalkOnSpheres
from exitmc.errors import InputError, UnsupportedSchemeError
from exitmc.estimators import (Quantity, expected_exit_time, expected_occupation,
                               extremum_over, green_apply)
from exitmc.geometry import radial_grid

X = [1.5, 0, 0]


def test_estimate_fields(shell, coarse):
    e = expected_exit_time(shell, X, coarse, 500, keep_samples=True)
    assert e.n_paths == 500 and e.truncated_fraction == 0
    assert e.std_error == pytest.approx(np.std(e.samples, ddof=1) / np.sqrt(500))
    assert "samples" not in e.to_json()


def test_needs_two_paths(shell, coarse):
    with pytest.raises(InputError):
        expected_exit_time(shell, X, coarse, 1)


def test_region_equal_to_domain_matches_exit(shell, coarse):
    e = expected_exit_time(shell, X, coarse, 800)
    o = expected_occupation(shell, shell, X, coarse, 800)
    assert o.mean == e.mean and o.step_total == e.step_total


def test_disjoint_region_is_zero(shell, coarse):
    o = expected_occupation(shell, Ball((9, 0, 0), 1.0), X, coarse, 200)
    assert o.mean == 0 and o.std_error == 0


def test_occupation_rejects_wos(shell):
    with pytest.raises(UnsupportedSchemeError):
        expected_occupation(shell, shell, X, SimParams(scheme=WalkOnSpheres()), 10)


@given(st.floats(1.05, 1.45), st.floats(1.55, 1.95), st.integers(0, 1000))
@settings(max_examples=15, deadline=None)
def test_partition_additivity_exact(a, b, seed):
    dom = Annulus((0, 0, 0), 1.0, 2.0)
    params = SimParams(scheme=EulerMaruyama(2e-3), seed=seed)
    part = Partition(Annulus((0, 0, 0), a, b), dom)
    e = expected_exit_time(dom, X, params, 300)
    o1 = expected_occupation(dom, part.d1_mask, X, params, 300)
    o2 = expected_occupation(dom, part.d2_mask, X, params, 300)
    assert o1.step_total + o2.step_total == e.step_total


@given(st.floats(1.05, 1.45), st.floats(0.0, 0.3), st.integers(0, 1000))
@settings(max_examples=15, deadline=None)
def test_monotone_in_region(a, grow, seed):
    dom = Annulus((0, 0, 0), 1.0, 2.0)
    params = SimParams(scheme=EulerMaruyama(2e-3), seed=seed)
    small = expected_occupation(dom, Annulus((0, 0, 0), a, 1.6), X, params, 200)
    big = expected_occupation(dom, Annulus((0, 0, 0), a - grow * (a - 1), 1.6 + grow), X,
                              params, 200)
    assert small.mean <= big.mean


def test_green_constant_one_is_exit(shell, coarse):
    e = expected_exit_time(shell, X, coarse, 400)
    g = green_apply(shell, 1.0, X, coarse, 400)
    assert g.mean == e.mean


def test_green_indicator_is_occupation(shell, coarse):
    region = Annulus((0, 0, 0), 1.2, 1.8)
    g = green_apply(shell, Integrand(mask=region), X, coarse, 400)
    o = expected_occupation(shell, region, X, coarse, 400)
    assert g.mean == o.mean


@given(st.floats(0.1, 10.0))
@settings(max_examples=8, deadline=None)
def test_green_scales_linearly(c):
    dom = Annulus((0, 0, 0), 1.0, 2.0)
    params = SimParams(scheme=EulerMaruyama(2e-3), seed=1)
    f = lambda Y: np.linalg.norm(Y, axis=1)
    g1 = green_apply(dom, f, X, params, 100)
    gc = green_apply(dom, lambda Y: c * f(Y), X, params, 100)
    assert gc.mean == pytest.approx(c * g1.mean, rel=1e-12)


def test_extremum_single_point_is_point_estimate(shell, coarse):
    ext = extremum_over(shell, Quantity.exit(), "inf", [X], coarse, 300)
    assert ext.value == expected_exit_time(shell, X, coarse, 300).mean


def test_extremum_empty_grid(shell, coarse):
    with pytest.raises(InputError):
        extremum_over(shell, Quantity.exit(), "sup", np.zeros((0, 3)), coarse, 10)


def test_extremum_grid_outside_region(shell, coarse):
    with pytest.raises(InputError):
        extremum_over(shell, Quantity.exit(), "sup", [[1.9, 0, 0]], coarse, 10,
                      over=Annulus((0, 0, 0), 1.2, 1.8))


def test_extremum_refinement_never_lowers_sup(shell, coarse):
    g = radial_grid(shell, 8)
    fine = np.concatenate([g, radial_grid(shell, 5)])
    a = extremum_over(shell, Quantity.exit(), "sup", g, coarse, 200)
    b = extremum_over(shell, Quantity.exit(), "sup", fine, coarse, 200)
    assert b.value >= a.value
    assert a.value == max(e.mean for _, e in a.per_point)


def test_inf_occupation_below_sup_exit(shell, coarse):
    region = Annulus((0, 0, 0), 1.2, 1.8)
    g = radial_grid(shell, 10)
    inf_occ = extremum_over(shell, Quantity.occupation(region), "inf",
                            radial_grid(shell, 10, region=region), coarse, 200)
    sup_exit = extremum_over(shell, Quantity.exit(), "sup", g, coarse, 200)
    assert inf_occ.value <= sup_exit.value


def test_ball_clt_band():
    ball = Ball((0, 0, 0), 1.0)
    params = SimParams(scheme=EulerMaruyama(1e-3), seed=0)
    e = expected_exit_time(ball, [0, 0, 0], params, 4000)
    # the overshoot bias at this step is about +0.012
    assert abs(e.mean - 1 / 3 - 0.012) < 4 * e.std_error
