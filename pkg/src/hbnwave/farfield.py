"""Far-field propagation of the post-hole field to a distant observation plane."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigurationError
from .potential import GridSpec
from .units import HELIUM_MASS, KM_S, METRE, MM2, PLANCK, AMU_A2_FS2


def de_broglie_wavelength(velocity, mass=HELIUM_MASS):
    """``h / (m v)`` in A for ``velocity`` in km/s and ``mass`` in amu."""
    if not (velocity > 0):
        raise ConfigurationError(f"velocity must be positive, got {velocity!r}")
    # h [eV fs] / (m [amu] * v [A/fs]) with 1 amu A^2/fs^2 = AMU_A2_FS2 eV
    return PLANCK / (mass * AMU_A2_FS2 * velocity * KM_S)


@dataclass(frozen=True)
class DiffractionPattern:
    """Probability per mm^2 on an observation grid (extent and origin in metres)."""

    grid: GridSpec
    values: np.ndarray
    distance: float
    wavelength: float

    @property
    def observation_extent(self):
        return self.grid.extent

    @property
    def n_points(self):
        return self.grid.n_points

    def integral(self):
        """Captured probability over the window."""
        cell_mm2 = (self.grid.spacing * 1e3) ** 2
        return float(np.sum(self.values) * cell_mm2)


@numba.njit(parallel=True, cache=True)
def _kirchhoff_kernel(obs_x, obs_y, L, src_x, src_y, src_re, src_im, k, out_re, out_im):
    n_obs = obs_x.shape[0]
    n_src = src_x.shape[0]
    for o in numba.prange(n_obs):
        X = obs_x[o]
        Y = obs_y[o]
        R = math.sqrt(X * X + Y * Y + L * L)
        acc_re = 0.0
        acc_im = 0.0
        for j in range(n_src):
            xi = src_x[j]
            eta = src_y[j]
            num = xi * xi + eta * eta - 2.0 * (X * xi + Y * eta)
            s = math.sqrt(R * R + num)
            delta = num / (s + R)
            w = (1.0 + L / s) / (2.0 * s)
            ph = k * delta
            c = math.cos(ph) * w
            sn = math.sin(ph) * w
            acc_re += src_re[j] * c - src_im[j] * sn
            acc_im += src_re[j] * sn + src_im[j] * c
        out_re[o] = acc_re
        out_im[o] = acc_im


def _sources(field):
    g = field.grid
    amp = field.amplitudes
    nz = np.flatnonzero(amp.ravel())
    x, y = g.mesh()
    src_x = (x - g.origin[0]).ravel()[nz]
    src_y = (y - g.origin[1]).ravel()[nz]
    a = amp.ravel()[nz]
    return src_x, src_y, a


def nyquist_spacing(field, wavelength, distance):
    """Largest observation spacing (m) that samples the integrand phase
    without aliasing: ``lambda L / (2 rho_max)``."""
    src_x, src_y, _ = _sources(field)
    if len(src_x) == 0:
        return math.inf
    rho_max = float(np.sqrt(np.max(src_x**2 + src_y**2)))
    if rho_max == 0.0:
        return math.inf
    return wavelength * distance / (2.0 * rho_max)


def kirchhoff_amplitude(field, wavelength, distance, x, y):
    """Kirchhoff amplitude at observation points ``(x, y)`` (metres).

    Direct quadrature over the non-zero source nodes with the exact
    obliquity ``cos(theta) = L / s``; ``A = 1``, so ``|psi'|^2`` is in A^-2.
    The common phase ``exp(i k R)`` to each observation point is included.
    """
    if not (wavelength > 0):
        raise ConfigurationError(f"wavelength must be positive, got {wavelength!r}")
    if not (distance > 0):
        raise ConfigurationError(f"distance must be positive, got {distance!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    ox = np.ascontiguousarray(np.broadcast_to(x, shape).ravel() * METRE)
    oy = np.ascontiguousarray(np.broadcast_to(y, shape).ravel() * METRE)
    L = distance * METRE
    k = 2.0 * math.pi / wavelength
    src_x, src_y, a = _sources(field)
    re = np.zeros(ox.size)
    im = np.zeros(ox.size)
    if len(a):
        _kirchhoff_kernel(
            ox, oy, L, np.ascontiguousarray(src_x), np.ascontiguousarray(src_y),
            np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag), k, re, im,
        )
    R = np.sqrt(ox**2 + oy**2 + L**2)
    carrier = np.exp(1j * np.mod(k * R, 2.0 * math.pi))
    pref = k / (2j * math.pi) * field.grid.cell_area
    return (pref * carrier * (re + 1j * im)).reshape(shape)


def _check_sampling(field, wavelength, distance, observation):
    limit = nyquist_spacing(field, wavelength, distance)
    if observation.spacing > limit:
        raise ConfigurationError(
            f"observation spacing {observation.spacing:.3g} m aliases the diffraction "
            f"phase; need <= {limit:.3g} m (more points or a smaller window)"
        )


def kirchhoff_propagate(field, wavelength, distance, observation):
    """Diffraction pattern of ``field`` on ``observation`` (a grid in metres)
    at ``distance`` metres, by direct Kirchhoff quadrature; values in
    probability per mm^2."""
    _check_sampling(field, wavelength, distance, observation)
    X, Y = observation.mesh()
    amp = kirchhoff_amplitude(field, wavelength, distance, X, Y)
    return DiffractionPattern(observation, np.abs(amp) ** 2 * MM2, distance, wavelength)


def fraunhofer_amplitude(field, wavelength, distance, x, y):
    """Paraxial far-field amplitude: the scaled Fourier transform of ``field``
    evaluated on the separable grid ``x`` by ``y`` (metres).

    ``psi'(X, Y) = k / (2 pi i L) exp(ik(L + (X^2+Y^2)/(2L))) sum psi exp(-ik(X xi + Y eta)/L) dA``.
    Returns an array indexed ``[iy, ix]``.
    """
    g = field.grid
    L = distance * METRE
    k = 2.0 * math.pi / wavelength
    xs = np.asarray(x, dtype=float) * METRE
    ys = np.asarray(y, dtype=float) * METRE
    xi = g.x - g.origin[0]
    eta = g.y - g.origin[1]
    ex = np.exp(-1j * k / L * np.outer(xi, xs))
    ey = np.exp(-1j * k / L * np.outer(ys, eta))
    core = ey @ field.amplitudes @ ex
    chirp = np.exp(1j * np.mod(k * (L + (xs[None, :] ** 2 + ys[:, None] ** 2) / (2 * L)), 2 * math.pi))
    return k / (2j * math.pi * L) * g.cell_area * chirp * core


def fraunhofer_propagate(field, wavelength, distance, observation):
    """Fast far-field path (paraxial Fourier transform), probability per mm^2."""
    if not (wavelength > 0) or not (distance > 0):
        raise ConfigurationError("wavelength and distance must be positive")
    amp = fraunhofer_amplitude(field, wavelength, distance, observation.x, observation.y)
    return DiffractionPattern(observation, np.abs(amp) ** 2 * MM2, distance, wavelength)


def radial_profile(pattern, center=(0.0, 0.0), bin_width=None):
    """Azimuthal average in annuli of width ``bin_width`` (default: grid spacing).

    Returns ``(radii, means)``: annulus mid-radii in metres and the mean
    probability per mm^2 of the nodes inside each non-empty annulus.
    """
    g = pattern.grid
    width = g.spacing if bin_width is None else float(bin_width)
    if not (width > 0):
        raise ConfigurationError("bin_width must be positive")
    X, Y = g.mesh()
    r = np.hypot(X - center[0], Y - center[1]).ravel()
    idx = np.floor(r / width).astype(np.int64)
    counts = np.bincount(idx)
    sums = np.bincount(idx, weights=pattern.values.ravel())
    keep = counts > 0
    radii = (np.arange(len(counts)) + 0.5) * width
    return radii[keep], sums[keep] / counts[keep]


class KirchhoffDiffraction(BaseEstimator):
    """Far-field diffraction pattern at ``distance`` metres.

    Parameters
    ----------
    velocity : float
        Atom velocity in km/s; sets the de Broglie wavelength unless
        ``wavelength`` (A) is given.
    window, n_points : float, int
        Observation window side (m) and nodes per axis.
    method : {"direct", "fourier"}
        Direct Kirchhoff quadrature or the paraxial Fourier fast path.
    """

    def __init__(self, velocity=2.0, mass=HELIUM_MASS, wavelength=None, distance=1.0,
                 window=4.0, n_points=512, method="direct"):
        self.velocity = velocity
        self.mass = mass
        self.wavelength = wavelength
        self.distance = distance
        self.window = window
        self.n_points = n_points
        self.method = method

    def fit(self, X=None, y=None):
        if self.method not in ("direct", "fourier"):
            raise ConfigurationError(f"unknown far-field method {self.method!r}")
        if not (self.distance > 0):
            raise ConfigurationError("distance must be positive")
        self.wavelength_ = (
            float(self.wavelength) if self.wavelength is not None
            else de_broglie_wavelength(self.velocity, self.mass)
        )
        self.observation_ = GridSpec(self.window, self.n_points)
        return self

    def transform(self, X):
        check_is_fitted(self, "observation_")
        fn = kirchhoff_propagate if self.method == "direct" else fraunhofer_propagate
        return fn(X, self.wavelength_, self.distance, self.observation_)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
