import numpy as np
import pytest
from scipy.integrate import quad

from uhdspike import mp_density, mp_law, mp_m, mp_outlier
from uhdspike.errors import InvalidPhi, Subcritical
from uhdspike.reference_mp import mp_f


def test_known_values():
    assert mp_m(4.0, 5.0) == pytest.approx(-0.4, abs=1e-15)
    assert mp_m(4.0, 2.5) == pytest.approx(-0.4 + 0.8j, abs=1e-15)
    law = mp_law(4.0)
    assert (law.gamma_minus, law.gamma_plus) == (0.5, 4.5)


@pytest.mark.parametrize("phi", [1.5, 4.0, 30.0])
def test_density_integrates_to_one(phi):
    law = mp_law(phi)
    mass, _ = quad(lambda x: mp_density(phi, x), law.gamma_minus, law.gamma_plus, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("phi", [2.0, 9.0])
def test_quadratic_root_solves_f(phi):
    z = np.array([0.1 + 1j, 3.0 + 0.01j, 20.0, -3.0])
    m = mp_m(phi, z)
    np.testing.assert_allclose(mp_f(phi, m), z, atol=1e-12)
    assert np.all(m.imag >= 0)


def test_outlier_closed_form_and_errors():
    assert mp_outlier(4.0, 4.0) == pytest.approx((5.0, 0.375), abs=1e-14)
    with pytest.raises(Subcritical):
        mp_outlier(4.0, 2.0)
    with pytest.raises(InvalidPhi):
        mp_law(1.0)
