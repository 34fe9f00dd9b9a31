import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from uhdspike import (
    PopulationSpectrum, counting_function, critical_points, density, density_curve,
    equivalent_law, m_prime, mp_density, mp_law, quantiles, solve_m,
)
from uhdspike.equivalents import f_eval
from uhdspike.errors import BracketFailure, PoleProximity


def mp(phi):
    return equivalent_law(PopulationSpectrum.from_atoms([(1.0, 1)]), phi)


def test_f_hand_value(two_atom):
    law = equivalent_law(two_atom, 4.0)
    # -1/x + 2 * (1/(1 - 1/8) + 2/(1 - 1/4)) / 2 at x = -1/4
    assert law.f(-0.25) == pytest.approx(7.809523809523809, rel=1e-15)
    assert law.m1 == pytest.approx(1.5)


def test_pole_is_rejected(two_atom):
    law = equivalent_law(two_atom, 4.0)
    with pytest.raises(PoleProximity):
        f_eval(law, -1.0)   # -sqrt(phi)/2
    with pytest.raises(PoleProximity):
        f_eval(law, 0.0)


def test_critical_points_are_roots_of_derivative(two_atom):
    law = equivalent_law(two_atom, 4.0)
    assert -law.sqphi / 2.0 < law.c1 < 0 < law.c2
    assert abs(law.f(law.c1, 1)) < 1e-12
    assert abs(law.f(law.c2, 1)) < 1e-12
    c1, c2 = critical_points(4.0, two_atom.values, two_atom.weights)
    assert (c1, c2) == (law.c1, law.c2)
    assert law.gamma_plus == pytest.approx(law.f(law.c1))


def test_split_support_is_reported():
    sp = PopulationSpectrum.from_atoms([(100.0, 1), (1.0, 1)])
    with pytest.raises(BracketFailure):
        equivalent_law(sp, 1.1)


@pytest.mark.parametrize("phi", [2.0, 4.0, 9.0])
def test_density_matches_mp(phi):
    law = mp(phi)
    E = np.linspace(law.gamma_minus, law.gamma_plus, 101)[1:-1]
    np.testing.assert_allclose(density(law, E), mp_density(phi, E), atol=1e-12)
    assert density(law, law.gamma_plus + 1) == 0.0


def test_counting_function_matches_integrated_mp():
    phi = 4.0
    law = mp(phi)
    for E in (0.7, 1.5, 3.0, 4.4):
        ref, _ = quad(lambda x: mp_density(phi, x), E, law.gamma_plus)
        assert counting_function(law, E) == pytest.approx(ref, abs=1e-10)


def test_quantiles_invert_counting_function(two_atom):
    law = equivalent_law(two_atom, 10.0)
    n = 200
    g = quantiles(law, n)
    assert g[-1] == law.gamma_minus
    assert np.all(np.diff(g) <= 0)
    np.testing.assert_allclose(counting_function(law, g[:-1]), np.arange(1, n) / n, atol=1e-10)
    assert law.mass == pytest.approx(1.0, abs=1e-12)


def test_density_curve_mass(two_atom):
    law = equivalent_law(two_atom, 10.0)
    c = density_curve(law, 128)
    assert c.mass == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff(c.grid) > 0)
    with pytest.raises(ValueError):
        density_curve(law, 0)


def test_real_axis_branches():
    law = mp(4.0)
    assert solve_m(law, 5.0) == pytest.approx(-0.4, abs=1e-14)
    m_low = solve_m(law, 0.25)
    assert m_low.imag == 0 and m_low.real > 0
    m_in = solve_m(law, 2.5)
    assert m_in == pytest.approx(-0.4 + 0.8j, abs=1e-12)


def test_m_prime_matches_finite_difference(two_atom):
    law = equivalent_law(two_atom, 6.0)
    z, h = 4.0 + 0.3j, 1e-6
    fd = (solve_m(law, z + h) - solve_m(law, z - h)) / (2 * h)
    assert m_prime(law, solve_m(law, z)) == pytest.approx(fd, rel=1e-7)


def test_rejects_lower_half_plane(two_atom):
    law = equivalent_law(two_atom, 4.0)
    with pytest.raises(ValueError):
        solve_m(law, 1.0 - 1j)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0.2, 5.0), st.integers(1, 20)), min_size=1, max_size=3),
       st.floats(1.2, 200.0), st.floats(-1.0, 1.0), st.floats(-9.0, 1.0))
def test_solution_is_in_upper_half_plane_and_consistent(atoms, phi, u, log_eta):
    try:
        law = equivalent_law(PopulationSpectrum.from_atoms(atoms), phi)
    except BracketFailure:
        return
    mid = 0.5 * (law.gamma_minus + law.gamma_plus)
    z = mid + u * (law.gamma_plus - law.gamma_minus) + 1j * 10**log_eta
    m = solve_m(law, z)
    assert m.imag > 0
    assert abs(z - law.f(m)) <= 1e-11 * max(1.0, abs(z))
