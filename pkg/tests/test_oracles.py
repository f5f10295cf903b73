import math

import numpy as np
import pytest

from exitmc import oracles
from exitmc.errors import InputError, SingularKernelError


def test_ball_exit_time():
    assert oracles.ball_exit_time(1.0, 3, [0, 0, 0]) == pytest.approx(1 / 3)
    assert oracles.ball_exit_time(2.0, 4, [1, 0, 0, 0]) == pytest.approx(3 / 4)
    with pytest.raises(InputError):
        oracles.ball_exit_time(1.0, 3, [2, 0, 0])


def test_annulus_exit_time_values():
    spec = oracles.AnnulusSpec3D(1.0, 2.0)
    assert oracles.annulus_exit_time(spec, [1.5, 0, 0]) == pytest.approx(0.25)
    assert oracles.annulus_exit_time(spec, [1, 0, 0]) == pytest.approx(0, abs=1e-14)
    assert oracles.annulus_exit_time(spec, [0, 2, 0]) == pytest.approx(0, abs=1e-14)


def test_annulus_sup_is_the_maximum():
    spec = oracles.AnnulusSpec3D(1.0, 2.0)
    sup, z = oracles.annulus_sup_exit_time(spec)
    assert z == pytest.approx(3 ** (1 / 3))
    r = np.linspace(1, 2, 100_001)
    assert sup == pytest.approx(oracles.annulus_exit_time_radial(spec, r).max(), abs=1e-9)
    assert sup == pytest.approx(7 / 3 - 3 ** (2 / 3), rel=1e-12)


def test_printed_sup_expression():
    spec = oracles.AnnulusSpec3D(1.0, 10.0)
    assert oracles.annulus_sup_exit_time_printed(spec) == pytest.approx(32.1792, abs=1e-4)
    assert oracles.annulus_sup_exit_time(spec)[0] == pytest.approx(22.5376, abs=1e-4)


def test_annulus_exit_time_solves_pde():
    spec = oracles.AnnulusSpec3D(1.0, 2.0)
    r, h = 1.37, 1e-3
    f = lambda s: oracles.annulus_exit_time_radial(spec, s)
    lap = (f(r + h) - 2 * f(r) + f(r - h)) / h**2 + (2 / r) * (f(r + h) - f(r - h)) / (2 * h)
    assert 0.5 * lap == pytest.approx(-1.0, abs=1e-5)


def test_M_constant():
    assert oracles.M_constant(1 / 3, 1.0, 3.0) == pytest.approx(math.sqrt(3))
    with pytest.raises(InputError):
        oracles.M_constant(1.0, 1.0, 1.0)
    with pytest.raises(InputError):
        oracles.M_constant(1.0, 0.0, 2.0)


def test_newtonian_constant_d3():
    assert oracles.newtonian_constant(3) == pytest.approx(1 / (2 * math.pi))


def test_heat_kernel_check_singular():
    with pytest.raises(SingularKernelError):
        oracles.heat_kernel_potential_check([0, 0, 0], [0, 0, 0], 3)
    with pytest.raises(InputError):
        oracles.heat_kernel_potential_check([0, 0], [1, 0], 2)


def test_heat_kernel_time_quadrature_agrees():
    lhs, rhs = oracles.heat_kernel_potential_check([0, 0, 0, 0], [1.0, 0, 0, 0], 4)
    assert oracles.heat_kernel_time_quadrature(1.0, 4) == pytest.approx(rhs, rel=1e-8)


def test_radial_ode_matches_closed_form():
    r = np.array([1.1, 1.3, 1.5, 1.9])
    fd = oracles.radial_occupation_oracle(1.0, 2.0, 1.2, 1.8, 3, r, n=20_000)
    exact = oracles.annulus_occupation_exact_3d(1.0, 2.0, 1.2, 1.8, r)
    np.testing.assert_allclose(fd, exact, rtol=1e-5)
    assert oracles.annulus_occupation_exact_3d(1.0, 2.0, 1.2, 1.8, 1.5) == pytest.approx(0.21)


def test_radial_ode_full_region_is_exit_time():
    r = np.array([0.0, 0.5, 0.9])
    v = oracles.radial_occupation_oracle(0.0, 1.0, 0.0, 1.0, 3, r, n=20_000)
    np.testing.assert_allclose(v, (1 - r**2) / 3, atol=1e-5)
