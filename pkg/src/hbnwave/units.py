"""Internal unit system: angstrom, femtosecond, atomic mass unit, electronvolt.

All derived constants are built from CODATA values in :mod:`scipy.constants`.
"""
from scipy import constants as _c

#: reduced Planck constant, eV fs
HBAR = _c.hbar / _c.e * 1e15
#: Planck constant, eV fs
PLANCK = _c.h / _c.e * 1e15
#: 1 amu * (A/fs)^2 expressed in eV
AMU_A2_FS2 = _c.atomic_mass * 1e10 / _c.e
#: e^2 / (4 pi eps0), eV A
COULOMB = _c.e / (4 * _c.pi * _c.epsilon_0) * 1e10
#: km/s -> A/fs
KM_S = 1e-2
#: metre -> A
METRE = 1e10
#: mm^2 -> A^2
MM2 = 1e14

HELIUM_MASS = 4.002602
