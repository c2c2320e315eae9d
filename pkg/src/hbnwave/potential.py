"""Casimir-Polder and electrostatic potentials plus the absorbing filter.

Point functions (:func:`casimir_polder`, :func:`electrostatic`,
:func:`filter_value`) are vectorised over atoms with numpy. Grid sampling uses
a compiled kernel that sums atoms in their model order for every grid node, so
results do not depend on the number of threads.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import ConfigurationError
from .units import COULOMB

DEFAULT_CUTOFF = 12.0
DEFAULT_U_MAX = 100.0
#: static dipole polarisability volume of helium, A^3
HELIUM_ALPHA0 = 0.2050522


@dataclass(frozen=True)
class GridSpec:
    """Square uniform grid of ``n_points`` per axis centred on ``origin``.

    Node ``i`` along an axis sits at ``origin + (i - n_points // 2) * spacing``,
    so the origin is itself a node. Arrays sampled on the grid are indexed
    ``[iy, ix]``.
    """

    extent: float
    n_points: int
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))
        n = self.n_points
        if not (self.extent > 0) or not math.isfinite(self.extent):
            raise ConfigurationError(f"grid extent must be positive, got {self.extent!r}")
        if (
            not isinstance(n, (int, np.integer))
            or isinstance(n, bool)
            or n < 16
            or (n & (n - 1)) != 0
        ):
            raise ConfigurationError(
                f"grid n_points must be a power of two >= 16, got {n!r}"
            )

    @property
    def spacing(self):
        return self.extent / self.n_points

    @property
    def cell_area(self):
        return self.spacing**2

    def axis(self, dim):
        return self.origin[dim] + (np.arange(self.n_points) - self.n_points // 2) * self.spacing

    @property
    def x(self):
        return self.axis(0)

    @property
    def y(self):
        return self.axis(1)

    def mesh(self):
        """``(X, Y)`` coordinate arrays of shape ``(n_points, n_points)``."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    def wavenumbers(self):
        """Angular wavenumbers ``(KX, KY)`` in FFT order."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)
        return np.meshgrid(k, k, indexing="xy")

    @property
    def diagonal(self):
        return self.extent * math.sqrt(2.0)


@dataclass(frozen=True)
class PotentialParams:
    """Sampling parameters. ``alpha0`` is the probe's static polarisability volume (A^3)."""

    alpha0: float = HELIUM_ALPHA0
    cutoff: float = DEFAULT_CUTOFF
    u_max: float = DEFAULT_U_MAX

    def __post_init__(self):
        if not (self.alpha0 >= 0):
            raise ConfigurationError("alpha0 must be non-negative")
        if not (self.cutoff > 0):
            raise ConfigurationError("cutoff must be positive")
        if not (self.u_max > 0):
            raise ConfigurationError("u_max must be positive")


@dataclass(frozen=True)
class PotentialSlice:
    grid: GridSpec
    z: float
    values: np.ndarray
    clamped: np.ndarray


@dataclass(frozen=True)
class FilterSlice:
    grid: GridSpec
    z: float
    values: np.ndarray


def _electrostatic_prefactor(alpha0):
    # alpha0 / (2 (4 pi eps0)^2) * e^2 with alpha0 given as a polarisability volume
    return 0.5 * alpha0 * COULOMB


def _separations(point, model, cutoff):
    sep = model.positions - np.asarray(point, dtype=float)
    r2 = np.einsum("ij,ij->i", sep, sep)
    sel = r2 <= cutoff * cutoff if cutoff is not None else np.ones(len(r2), bool)
    return sep[sel], r2[sel], sel


def casimir_polder(point, model, cutoff=DEFAULT_CUTOFF):
    """Pairwise Casimir-Polder energy (eV) of the probe at ``point`` (A).

    Sums ``-C6 / (6 r^6) * (Tr D + 3 r.D.r / r^2)`` over every atom within
    ``cutoff``; ``cutoff=None`` sums all atoms.
    """
    sep, r2, sel = _separations(point, model, cutoff)
    if len(r2) == 0:
        return 0.0
    d = model.d_matrices[sel]
    quad = np.einsum("ij,ijk,ik->i", sep, d, sep)
    tr = np.trace(d, axis1=1, axis2=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = model.c6[sel] / (6.0 * r2**3) * (tr + 3.0 * quad / r2)
    return float(-np.sum(terms))


def electrostatic(point, model, alpha0=HELIUM_ALPHA0, cutoff=DEFAULT_CUTOFF):
    """Induced-dipole energy (eV) in the field of the atoms' partial charges."""
    sep, r2, sel = _separations(point, model, cutoff)
    if len(r2) == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        s = np.sum(model.charges[sel] / r2)
    return float(-_electrostatic_prefactor(alpha0) * s * s)


def single_filter(r, r_vdw):
    """Absorption factor of one atom at distance ``r``; vectorised over ``r``."""
    r = np.asarray(r, dtype=float)
    inner = 0.8 * r_vdw
    ramp = np.sin(0.5 * np.pi * (r - inner) / (0.2 * r_vdw)) ** 4
    return np.where(r <= inner, 0.0, np.where(r >= r_vdw, 1.0, ramp))


def filter_value(point, model):
    """Product of the single-atom filters at ``point``; in ``[0, 1]``."""
    if len(model) == 0:
        return 1.0
    r = np.linalg.norm(model.positions - np.asarray(point, dtype=float), axis=1)
    return float(np.prod(single_filter(r, model.vdw_radii)))


@numba.njit(parallel=True, cache=True)
def _sample_kernel(xs, ys, z, pos, c6, dmat, trd, q, rvdw, cutoff2, el_pref, u_max,
                   out_u, out_f, out_clamped):
    ny = ys.shape[0]
    nx = xs.shape[0]
    na = pos.shape[0]
    half_pi = 0.5 * np.pi
    for iy in numba.prange(ny):
        py = ys[iy]
        for ix in range(nx):
            px = xs[ix]
            cp = 0.0
            es = 0.0
            f = 1.0
            singular = False
            for a in range(na):
                dx = pos[a, 0] - px
                dy = pos[a, 1] - py
                dz = pos[a, 2] - z
                r2 = dx * dx + dy * dy + dz * dz
                rv = rvdw[a]
                if r2 < rv * rv:
                    r = math.sqrt(r2)
                    inner = 0.8 * rv
                    if r <= inner:
                        f = 0.0
                    else:
                        s = math.sin(half_pi * (r - inner) / (0.2 * rv))
                        f *= s * s * s * s
                if r2 <= cutoff2:
                    if r2 == 0.0:
                        singular = True
                        continue
                    quad = (
                        dx * (dmat[a, 0, 0] * dx + dmat[a, 0, 1] * dy + dmat[a, 0, 2] * dz)
                        + dy * (dmat[a, 1, 0] * dx + dmat[a, 1, 1] * dy + dmat[a, 1, 2] * dz)
                        + dz * (dmat[a, 2, 0] * dx + dmat[a, 2, 1] * dy + dmat[a, 2, 2] * dz)
                    )
                    cp -= c6[a] / (6.0 * r2 * r2 * r2) * (trd[a] + 3.0 * quad / r2)
                    es += q[a] / r2
            u = cp - el_pref * es * es
            clamped = False
            if singular or not math.isfinite(u) or u < -u_max:
                u = -u_max
                clamped = True
            elif u > u_max:
                u = u_max
                clamped = True
            out_u[iy, ix] = u
            out_f[iy, ix] = f
            out_clamped[iy, ix] = clamped


def atoms_near_grid(model, grid, margin):
    """Indices (model order) of atoms within ``margin`` of the grid's bounding box."""
    if len(model) == 0:
        return np.zeros(0, dtype=np.int64)
    lo = np.array([grid.x[0], grid.y[0]])
    hi = np.array([grid.x[-1], grid.y[-1]])
    xy = model.positions[:, :2]
    d = np.maximum(np.maximum(lo - xy, xy - hi), 0.0)
    return np.flatnonzero(np.einsum("ij,ij->i", d, d) <= margin * margin)


class _AtomArrays:
    """Contiguous per-atom arrays for the sampling kernel."""

    def __init__(self, model, grid, params):
        idx = atoms_near_grid(model, grid, max(params.cutoff, _max_vdw(model)))
        self.pos = np.ascontiguousarray(model.positions[idx])
        self.c6 = np.ascontiguousarray(model.c6[idx])
        self.dmat = np.ascontiguousarray(model.d_matrices[idx])
        self.trd = np.ascontiguousarray(np.trace(self.dmat, axis1=1, axis2=2))
        self.q = np.ascontiguousarray(model.charges[idx])
        self.rvdw = np.ascontiguousarray(model.vdw_radii[idx])


def _max_vdw(model):
    return float(model.vdw_radii.max()) if len(model) else 0.0


def _sample(atoms, grid, z, params):
    n = grid.n_points
    u = np.empty((n, n))
    f = np.empty((n, n))
    clamped = np.empty((n, n), dtype=np.bool_)
    _sample_kernel(
        np.ascontiguousarray(grid.x), np.ascontiguousarray(grid.y), float(z),
        atoms.pos, atoms.c6, atoms.dmat, atoms.trd, atoms.q, atoms.rvdw,
        params.cutoff**2, _electrostatic_prefactor(params.alpha0), params.u_max,
        u, f, clamped,
    )
    return u, f, clamped


def sample_slice(model, grid, z, params=None):
    """Sample ``U = U_CP + U_el`` and the filter on ``grid`` at height ``z``.

    Atoms outside the grid but within the cutoff of its boundary contribute.
    ``|U|`` is clamped at ``params.u_max``; clamped nodes are flagged.
    """
    params = params or PotentialParams()
    u, f, clamped = _sample(_AtomArrays(model, grid, params), grid, z, params)
    return PotentialSlice(grid, float(z), u, clamped), FilterSlice(grid, float(z), f)


class SliceTable:
    """Potential and filter slices on a lattice of heights ``z_k = k * z_step``.

    Slices are computed lazily and cached by ``k``; :meth:`at` interpolates
    linearly between the two neighbouring lattice heights. The filter of a
    slice farther than every vdW radius from the plane is stored as ``None``
    (identically one).
    """

    def __init__(self, model, grid, params=None, z_step=0.02):
        if not (z_step > 0):
            raise ConfigurationError("z_table_step must be positive")
        self.model = model
        self.grid = grid
        self.params = params or PotentialParams()
        self.z_step = float(z_step)
        self._atoms = _AtomArrays(model, grid, self.params)
        self._reach = _max_vdw(model)
        self._slices = {}
        self._open_max = {}

    def __len__(self):
        return len(self._slices)

    def key(self, z):
        return int(math.floor(z / self.z_step))

    def get(self, k):
        hit = self._slices.get(k)
        if hit is None:
            z = k * self.z_step
            u, f, _ = _sample(self._atoms, self.grid, z, self.params)
            if abs(z - self.model.plane_z) >= self._reach and f.min() == 1.0:
                f = None
            hit = (u, f)
            self._slices[k] = hit
        return hit

    def prefill(self, z_lo, z_hi):
        for k in range(self.key(z_lo), self.key(z_hi) + 2):
            self.get(k)

    def at(self, z):
        """``(U, F)`` arrays at height ``z``; ``F`` may be ``None`` (all ones)."""
        k = self.key(z)
        w = z / self.z_step - k
        u0, f0 = self.get(k)
        u1, f1 = self.get(k + 1)
        u = (1.0 - w) * u0 + w * u1
        if f0 is None and f1 is None:
            return u, None
        f0 = 1.0 if f0 is None else f0
        f1 = 1.0 if f1 is None else f1
        return u, (1.0 - w) * f0 + w * f1

    def open_max(self, k):
        """Largest ``|U|`` of slice ``k`` over nodes the filter leaves open."""
        hit = self._open_max.get(k)
        if hit is None:
            u, f = self.get(k)
            a = np.abs(u) if f is None else np.abs(u[f > 0.0])
            hit = float(a.max()) if a.size else 0.0
            self._open_max[k] = hit
        return hit

    def max_abs_open(self):
        """Largest ``|U|`` over cached nodes where the filter is non-zero."""
        return max((self.open_max(k) for k in list(self._slices)), default=0.0)


_TABLE_CACHE = OrderedDict()
_TABLE_CACHE_SIZE = 2


def slice_table(model, grid, params=None, z_step=0.02):
    """Shared :class:`SliceTable` for identical inputs (small LRU)."""
    params = params or PotentialParams()
    key = (model.fingerprint(), model.plane_z, grid, params, float(z_step))
    table = _TABLE_CACHE.get(key)
    if table is None:
        table = SliceTable(model, grid, params, z_step)
        _TABLE_CACHE[key] = table
        while len(_TABLE_CACHE) > _TABLE_CACHE_SIZE:
            _TABLE_CACHE.popitem(last=False)
    else:
        _TABLE_CACHE.move_to_end(key)
    return table


def clear_table_cache():
    _TABLE_CACHE.clear()
