import math

import pytest
from hypothesis import given, strategies as st

from hbnwave.exceptions import ConfigurationError
from hbnwave.farfield import de_broglie_wavelength
from hbnwave.metrics import kinetic_energy
from hbnwave.units import AMU_A2_FS2, HBAR, HELIUM_MASS, KM_S, PLANCK


def test_constants_consistent():
    assert PLANCK == pytest.approx(2 * math.pi * HBAR, rel=1e-15)
    assert HBAR == pytest.approx(0.6582119569, rel=1e-9)
    # 1 amu (A/fs)^2 in eV
    assert AMU_A2_FS2 == pytest.approx(103.6427, rel=1e-6)


@pytest.mark.parametrize("v, energy", [(20.0, 8.3), (150.0, 466.0)])
def test_helium_kinetic_energy(v, energy):
    assert kinetic_energy(v, HELIUM_MASS) == pytest.approx(energy, rel=0.01)


def test_kinetic_energy_hand_value():
    # m v^2 / 2 with m = 4.002602 amu, v = 1 km/s = 0.01 A/fs
    assert kinetic_energy(1.0) == pytest.approx(0.5 * 4.002602 * 1e-4 * AMU_A2_FS2, rel=1e-14)


@given(st.floats(0.01, 500.0), st.floats(0.1, 10.0))
def test_kinetic_energy_scales_quadratically(v, s):
    assert kinetic_energy(s * v) == pytest.approx(s * s * kinetic_energy(v), rel=1e-12)


def test_kinetic_energy_rejects_negative():
    with pytest.raises(ConfigurationError):
        kinetic_energy(-1.0)


def test_de_broglie_helium_2kms():
    # h / (m v) = 6.62607015e-34 / (4.002602 * 1.66053907e-27 * 2000) m
    expected = 6.62607015e-34 / (4.002602 * 1.66053906660e-27 * 2000.0) * 1e10
    assert de_broglie_wavelength(2.0) == pytest.approx(expected, rel=1e-8)
    assert de_broglie_wavelength(2.0) == pytest.approx(0.49846, abs=1e-5)


@given(st.floats(0.05, 200.0))
def test_de_broglie_inverse_in_velocity(v):
    assert de_broglie_wavelength(v) * v == pytest.approx(de_broglie_wavelength(1.0), rel=1e-12)


def test_velocity_unit():
    assert KM_S == 0.01
