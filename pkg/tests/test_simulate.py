import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exitmc import (Annulus, Ball, EulerMaruyama, Integrand, SimParams, WalkOnSpheres,
                    exit_sample, functional_sample, occupation_sample)
from exitmc.errors import (ConfigurationError, InputError, UnboundedIntegrandError,
                           UnsupportedSchemeError)
from exitmc.simulate import run_paths


def test_exit_sample_deterministic(unit_ball, coarse):
    a = exit_sample(unit_ball, [0, 0, 0], coarse, 7)
    b = exit_sample(unit_ball, [0, 0, 0], coarse, 7)
    assert a == b
    assert a.exit_time == a.steps * 1e-3
    assert not unit_ball.contains(a.exit_point)


def test_single_path_matches_batch(unit_ball, coarse):
    batch = run_paths(unit_ball, [0.3, 0, 0], coarse, 40)
    one = exit_sample(unit_ball, [0.3, 0, 0], coarse, 23)
    assert one.steps == batch.steps[23]


def test_near_boundary_exits_fast(unit_ball):
    x = [1 - 1e-9, 0, 0]
    batch = run_paths(unit_ball, x, SimParams(seed=1), 10_000)
    assert batch.exit_time.mean() < 0.01


def test_start_outside_rejected(unit_ball, coarse):
    with pytest.raises(InputError):
        exit_sample(unit_ball, [1.5, 0, 0], coarse, 0)


def test_truncation_reported(unit_ball):
    params = SimParams(scheme=EulerMaruyama(1e-4), max_steps=10, seed=0)
    out = exit_sample(unit_ball, [0, 0, 0], params, 0)
    assert out.truncated and out.steps == 10


def test_bridge_correction_is_a_stub():
    with pytest.raises(ConfigurationError):
        SimParams(bridge_correction=True)


def test_occupation_of_domain_is_exit_time(shell, coarse):
    for i in range(5):
        occ = occupation_sample(shell, shell, [1.5, 0, 0], coarse, i)
        assert occ.functional_value == occ.exit_time


def test_occupation_of_disjoint_region_is_zero(shell, coarse):
    occ = occupation_sample(shell, Ball((5, 0, 0), 1.0), [1.5, 0, 0], coarse, 0)
    assert occ.functional_value == 0.0


def test_occupation_needs_em(shell):
    with pytest.raises(UnsupportedSchemeError):
        occupation_sample(shell, shell, [1.5, 0, 0], SimParams(scheme=WalkOnSpheres()), 0)


def test_functional_constant_one_is_exit_time(shell, coarse):
    out = functional_sample(shell, lambda X: np.ones(len(X)), [1.5, 0, 0], coarse, 2)
    assert out.functional_value == pytest.approx(out.exit_time, rel=1e-12)


def test_functional_zero(shell, coarse):
    out = functional_sample(shell, lambda X: np.zeros(len(X)), [1.5, 0, 0], coarse, 2)
    assert out.functional_value == 0.0


def test_functional_indicator_matches_occupation(shell, coarse):
    region = Annulus((0, 0, 0), 1.2, 1.8)
    f = functional_sample(shell, lambda X: region.contains(X).astype(float), [1.5, 0, 0],
                          coarse, 3)
    o = occupation_sample(shell, region, [1.5, 0, 0], coarse, 3)
    assert f.functional_value == pytest.approx(o.functional_value, rel=1e-12)


def test_unbounded_integrand_names_point(unit_ball, coarse):
    with pytest.raises(UnboundedIntegrandError) as err:
        functional_sample(unit_ball, lambda X: 1.0 / np.linalg.norm(X, axis=1) ** 9,
                          [0.05, 0, 0], coarse, 0, cap=1e6)
    assert err.value.value > 1e6
    assert len(err.value.point) == 3


def test_wos_rejects_integrands(shell):
    with pytest.raises(UnsupportedSchemeError):
        run_paths(shell, [1.5, 0, 0], SimParams(scheme=WalkOnSpheres()), 4,
                  integrand=Integrand())


def test_wos_exit_points_in_shell(unit_ball):
    batch = run_paths(unit_ball, [0, 0, 0], SimParams(scheme=WalkOnSpheres(1e-3)), 500)
    r = np.linalg.norm(batch.exit_point, axis=1)
    # the first jump from the center lands on the sphere itself, up to rounding
    assert ((r > 1 - 1e-3) & (r <= 1 + 1e-12)).all()


def test_em_bias_shrinks_with_step(unit_ball):
    means = [run_paths(unit_ball, [0, 0, 0], SimParams(scheme=EulerMaruyama(h), seed=5),
                       20_000).exit_time.mean() for h in (4e-4, 1e-4)]
    # overshoot makes EM exit late, and less so for smaller steps
    assert means[0] > means[1] > 1 / 3 - 0.005


@given(st.integers(1, 4), st.integers(0, 2**32))
@settings(max_examples=10, deadline=None)
def test_results_independent_of_workers(workers, seed):
    dom = Annulus((0, 0, 0), 1.0, 2.0)
    params = SimParams(scheme=EulerMaruyama(1e-2), seed=seed)
    a = run_paths(dom, [1.5, 0, 0], params, 2100, workers=1)
    b = run_paths(dom, [1.5, 0, 0], params, 2100, workers=workers)
    np.testing.assert_array_equal(a.steps, b.steps)
    np.testing.assert_array_equal(a.exit_point, b.exit_point)
