"""Split-operator propagation of the transverse wavefunction through the monolayer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.fft as sfft
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigurationError, NumericalStabilityError
from .lattice import MonolayerModel
from .potential import (
    DEFAULT_CUTOFF,
    DEFAULT_U_MAX,
    HELIUM_ALPHA0,
    FilterSlice,
    GridSpec,
    PotentialParams,
    PotentialSlice,
    slice_table,
)
from .units import AMU_A2_FS2, HBAR, HELIUM_MASS, KM_S

Z_START = -4.23


@dataclass
class WaveField:
    """Complex amplitudes on ``grid``; ``|psi|^2`` is a probability density (A^-2)."""

    grid: GridSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        n = self.grid.n_points
        if a.shape != (n, n):
            raise ConfigurationError(f"amplitudes shape {a.shape} does not match grid {n}x{n}")
        self.amplitudes = a

    @property
    def density(self):
        return self.amplitudes.real**2 + self.amplitudes.imag**2

    @property
    def norm(self):
        return float(np.sum(self.density) * self.grid.cell_area)

    def copy(self):
        return WaveField(self.grid, self.amplitudes.copy())


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one propagation run.

    ``velocity`` is in km/s, heights in A, ``dt`` in fs (``None`` selects it
    automatically), ``mass`` in amu.
    """

    velocity: float
    grid: GridSpec
    z_start: float = Z_START
    z_stop: float = -Z_START
    dt: float | None = None
    mass: float = HELIUM_MASS
    hole: str | None = None
    snapshot_every: int = 10
    alpha0: float = HELIUM_ALPHA0
    cutoff: float = DEFAULT_CUTOFF
    u_max: float = DEFAULT_U_MAX
    z_table_step: float = 0.02
    phase_limit: float = 0.3
    max_dz_per_step: float = 0.01
    absorption_dz: float | None = 0.01

    def __post_init__(self):
        problems = run_config_problems(self)
        if problems:
            raise ConfigurationError("; ".join(problems))


def run_config_problems(cfg):
    out = []
    if not (cfg.velocity > 0):
        out.append(f"velocity must be positive, got {cfg.velocity!r}")
    if not (cfg.z_start < 0 < cfg.z_stop):
        out.append(f"need z_start < 0 < z_stop, got {cfg.z_start!r}, {cfg.z_stop!r}")
    if cfg.dt is not None and not (cfg.dt > 0):
        out.append(f"dt must be positive, got {cfg.dt!r}")
    if not (cfg.mass > 0):
        out.append(f"mass must be positive, got {cfg.mass!r}")
    if not (isinstance(cfg.snapshot_every, int) and cfg.snapshot_every >= 1):
        out.append(f"snapshot_every must be an integer >= 1, got {cfg.snapshot_every!r}")
    if not (cfg.phase_limit > 0):
        out.append("phase_limit must be positive")
    if not (cfg.max_dz_per_step > 0):
        out.append("max_dz_per_step must be positive")
    if not (cfg.z_table_step > 0):
        out.append("z_table_step must be positive")
    if cfg.absorption_dz is not None and not (cfg.absorption_dz > 0):
        out.append("absorption_dz must be positive or null")
    return out


@dataclass
class PropagationRecord:
    """Snapshots ``(z, relative transmission)`` and the field after the last step."""

    z: np.ndarray
    relative_transmission: np.ndarray
    final_field: WaveField
    dt: float
    n_steps: int
    max_abs_potential: float = 0.0
    meta: dict = field(default_factory=dict)

    def rows(self):
        return list(zip(self.z.tolist(), self.relative_transmission.tolist()))


def init_uniform(grid):
    """Constant amplitude normalised to one over the grid."""
    amp = np.full((grid.n_points, grid.n_points), 1.0 / grid.extent, dtype=np.complex128)
    return WaveField(grid, amp)


def kinetic_phase(grid, dt, mass):
    """``exp(-i hbar k^2 dt / (4 m))``: half a kinetic step for each transverse mode."""
    kx, ky = grid.wavenumbers()
    return np.exp(-1j * HBAR * (kx**2 + ky**2) * dt / (4.0 * mass * AMU_A2_FS2))


def _same_grid(*grids):
    g0 = grids[0]
    return all(g == g0 for g in grids[1:])


@numba.njit(cache=True)
def _apply_phase(psi, u, scale):
    # psi *= exp(-i scale u)
    n0, n1 = psi.shape
    for i in range(n0):
        for j in range(n1):
            a = scale * u[i, j]
            psi[i, j] *= complex(math.cos(a), -math.sin(a))


@numba.njit(cache=True)
def _apply_filter(psi, f, power):
    n0, n1 = psi.shape
    for i in range(n0):
        for j in range(n1):
            fij = f[i, j]
            if fij != 1.0:
                psi[i, j] *= fij if power == 1.0 else fij**power


class SplitStepper:
    """Reusable symmetric split-operator step for fixed ``dt`` and mass."""

    def __init__(self, grid, dt, mass):
        self.grid = grid
        self.dt = dt
        self.mass = mass
        self.half_kinetic = kinetic_phase(grid, dt, mass)

    def __call__(self, psi, u, f=None, power=1.0):
        """Advance amplitudes ``psi`` one step; the filter enters as ``f**power``."""
        psi = sfft.fft2(psi)
        psi *= self.half_kinetic
        psi = sfft.ifft2(psi, overwrite_x=True)
        _apply_phase(psi, np.ascontiguousarray(u, dtype=np.float64), self.dt / HBAR)
        psi = sfft.fft2(psi, overwrite_x=True)
        psi *= self.half_kinetic
        psi = sfft.ifft2(psi, overwrite_x=True)
        if f is not None:
            _apply_filter(psi, np.ascontiguousarray(f, dtype=np.float64), float(power))
        return psi


def split_step(field, potential, filter, dt, mass):
    """One symmetric split-operator step followed by the absorbing filter.

    Half kinetic step in spectral space, full potential phase
    ``exp(-i U dt / hbar)``, half kinetic step, then multiplication by the
    filter. The spectral steps impose periodic boundaries.
    """
    if not _same_grid(field.grid, potential.grid, filter.grid):
        raise ConfigurationError("field, potential and filter must share one grid")
    stepper = SplitStepper(field.grid, dt, mass)
    return WaveField(field.grid, stepper(field.amplitudes, potential.values, filter.values))


def circle_mask(grid, area):
    x, y = grid.mesh()
    r2 = (x - grid.origin[0]) ** 2 + (y - grid.origin[1]) ** 2
    return r2 <= area / math.pi


def relative_transmission(field, reference_area, initial_field):
    """Norm of ``field`` over the grid divided by the initial norm inside the
    central comparison circle of area ``reference_area``.

    The denominator is the mean initial density over grid nodes inside the
    circle times ``reference_area``, which is exact for a uniform start.
    """
    return field.norm / _circle_norm(initial_field, reference_area)


def _circle_norm(initial_field, reference_area):
    if not (reference_area > 0):
        raise ConfigurationError(f"reference_area must be positive, got {reference_area!r}")
    mask = circle_mask(initial_field.grid, reference_area)
    if not mask.any():
        raise ConfigurationError("comparison circle contains no grid nodes")
    denom = float(np.mean(initial_field.density[mask])) * reference_area
    if denom == 0.0:
        raise ConfigurationError("initial field vanishes inside the comparison circle")
    return denom


def step_plan(cfg, u_open_max):
    """Fixed step: number of steps and the exact ``dt`` landing on ``z_stop``.

    Without an explicit ``dt`` it is the largest value keeping the potential
    phase ``|U| dt / hbar`` within ``phase_limit`` for ``|U| = u_open_max``,
    and the height advance per step within ``max_dz_per_step``.
    """
    v = cfg.velocity * KM_S
    if cfg.dt is not None:
        dt = cfg.dt
    else:
        dt = cfg.max_dz_per_step / v
        if u_open_max > 0:
            dt = min(dt, cfg.phase_limit * HBAR / u_open_max)
    span_t = (cfg.z_stop - cfg.z_start) / v
    n_steps = max(1, math.ceil(span_t / dt - 1e-9))
    return n_steps, span_t / n_steps


def adaptive_schedule(cfg, table):
    """Step sizes for automatic time stepping.

    Steps take values ``dt_max / 2**j`` with ``dt_max = max_dz_per_step / v``;
    each step uses the largest level whose potential phase stays within
    ``phase_limit`` for the largest open-node ``|U|`` on the table slices it
    spans. The last step is shortened to land on ``z_stop``.
    """
    v = cfg.velocity * KM_S
    dt_max = cfg.max_dz_per_step / v
    limit = cfg.phase_limit * HBAR
    steps = []
    z = cfg.z_start
    eps = 1e-12 * (cfg.z_stop - cfg.z_start)
    while z < cfg.z_stop - eps:
        dt = dt_max
        while True:
            z1 = min(z + v * dt, cfg.z_stop)
            u = max(table.open_max(k) for k in range(table.key(z), table.key(z1) + 2))
            if u * dt <= limit or dt < 1e-9 * dt_max:
                break
            dt *= 0.5
        if z + v * dt >= cfg.z_stop - eps:
            dt = (cfg.z_stop - z) / v
            z = cfg.z_stop
        else:
            z = z + v * dt
        steps.append(dt)
    return np.array(steps)


class TransversePropagator(BaseEstimator):
    """Paraxial split-operator propagation through a monolayer.

    The height of the simulated plane follows ``z(t) = z_start + v t``; the
    potential of each step is taken at its midpoint height.

    Parameters
    ----------
    velocity : float
        Atom velocity, km/s.
    extent, n_points : float, int
        Transverse grid (A, nodes per axis); the grid is centred on
        ``origin``, or on the model's ``center`` when ``origin`` is ``None``.
    reference_area : float or None
        Comparison-circle area (A^2) for relative transmission; ``None`` uses
        the whole grid.
    dt : float or None
        Time step in fs; ``None`` for automatic selection (see :func:`step_plan`).

    Attributes
    ----------
    grid_ : GridSpec
    table_ : SliceTable
    dt_, n_steps_ : float, int
    record_ : PropagationRecord
        Set by :meth:`transform`.
    """

    def __init__(self, velocity=2.0, extent=15.9, n_points=128, z_start=Z_START,
                 z_stop=-Z_START, dt=None, mass=HELIUM_MASS, alpha0=HELIUM_ALPHA0,
                 cutoff=DEFAULT_CUTOFF, u_max=DEFAULT_U_MAX, z_table_step=0.02,
                 phase_limit=0.3, max_dz_per_step=0.01, absorption_dz=0.01,
                 snapshot_every=10, reference_area=None, origin=None):
        self.velocity = velocity
        self.extent = extent
        self.n_points = n_points
        self.z_start = z_start
        self.z_stop = z_stop
        self.dt = dt
        self.mass = mass
        self.alpha0 = alpha0
        self.cutoff = cutoff
        self.u_max = u_max
        self.z_table_step = z_table_step
        self.phase_limit = phase_limit
        self.max_dz_per_step = max_dz_per_step
        self.absorption_dz = absorption_dz
        self.snapshot_every = snapshot_every
        self.reference_area = reference_area
        self.origin = origin

    def run_config(self, grid):
        return RunConfig(
            velocity=self.velocity, grid=grid, z_start=self.z_start, z_stop=self.z_stop,
            dt=self.dt, mass=self.mass, snapshot_every=self.snapshot_every,
            alpha0=self.alpha0, cutoff=self.cutoff, u_max=self.u_max,
            z_table_step=self.z_table_step, phase_limit=self.phase_limit,
            max_dz_per_step=self.max_dz_per_step, absorption_dz=self.absorption_dz,
        )

    def fit(self, X, y=None):
        """Sample the potential table of monolayer ``X`` and choose the time step."""
        if not isinstance(X, MonolayerModel):
            raise ConfigurationError("fit expects a MonolayerModel")
        origin = X.center if self.origin is None else self.origin
        grid = GridSpec(self.extent, self.n_points, origin)
        cfg = self.run_config(grid)
        if self.reference_area is not None and not (self.reference_area > 0):
            raise ConfigurationError("reference_area must be positive")
        params = PotentialParams(alpha0=cfg.alpha0, cutoff=cfg.cutoff, u_max=cfg.u_max)
        table = slice_table(X, grid, params, cfg.z_table_step)
        table.prefill(cfg.z_start, cfg.z_stop)
        self.model_ = X
        self.grid_ = grid
        self.config_ = cfg
        self.table_ = table
        self.u_open_max_ = table.max_abs_open()
        if cfg.dt is None:
            self.schedule_ = adaptive_schedule(cfg, table)
        else:
            n, dt = step_plan(cfg, self.u_open_max_)
            self.schedule_ = np.full(n, dt)
        self.n_steps_ = len(self.schedule_)
        self.dt_ = float(self.schedule_.min())
        return self

    def transform(self, X=None):
        """Propagate ``X`` (a :class:`WaveField`; default uniform) and return the final field."""
        check_is_fitted(self, "table_")
        psi0 = init_uniform(self.grid_) if X is None else X
        if psi0.grid != self.grid_:
            raise ConfigurationError("initial field grid does not match the fitted grid")
        self.record_ = self._run(psi0)
        return self.record_.final_field

    def fit_transform(self, X, y=None, initial_field=None):
        return self.fit(X).transform(initial_field)

    def _run(self, psi0):
        cfg, grid, table = self.config_, self.grid_, self.table_
        v = cfg.velocity * KM_S
        area = self.reference_area if self.reference_area is not None else grid.extent**2
        scale = 1.0 / _circle_norm(psi0, area)
        steppers = {}
        psi = psi0.amplitudes.copy()
        cell = grid.cell_area
        zs = [cfg.z_start]
        ts = [float(np.sum(psi.real**2 + psi.imag**2) * cell) * scale]
        max_u = 0.0
        z = cfg.z_start
        n_steps = len(self.schedule_)
        for step, dt in enumerate(self.schedule_, start=1):
            stepper = steppers.get(dt)
            if stepper is None:
                stepper = steppers[dt] = SplitStepper(grid, dt, cfg.mass)
            z_mid = z + 0.5 * v * dt
            u, f = table.at(z_mid)
            max_u = max(max_u, float(np.max(np.abs(u))))
            power = 1.0 if cfg.absorption_dz is None else v * dt / cfg.absorption_dz
            psi = stepper(psi, u, f, power)
            z = cfg.z_stop if step == n_steps else z + v * dt
            if step % cfg.snapshot_every == 0 or step == n_steps:
                norm = float(np.sum(psi.real**2 + psi.imag**2) * cell)
                if not math.isfinite(norm):
                    raise NumericalStabilityError(step, z_mid, max_u)
                zs.append(z)
                ts.append(norm * scale)
        if not np.all(np.isfinite(psi)):
            raise NumericalStabilityError(n_steps, cfg.z_stop, max_u)
        return PropagationRecord(
            z=np.array(zs), relative_transmission=np.array(ts),
            final_field=WaveField(grid, psi), dt=self.dt_, n_steps=n_steps,
            max_abs_potential=max_u,
        )


def propagate(model, cfg, reference_area=None, initial_field=None):
    """Run ``cfg`` through ``model`` and return the :class:`PropagationRecord`."""
    est = TransversePropagator(
        velocity=cfg.velocity, extent=cfg.grid.extent, n_points=cfg.grid.n_points,
        z_start=cfg.z_start, z_stop=cfg.z_stop, dt=cfg.dt, mass=cfg.mass,
        alpha0=cfg.alpha0, cutoff=cfg.cutoff, u_max=cfg.u_max,
        z_table_step=cfg.z_table_step, phase_limit=cfg.phase_limit,
        max_dz_per_step=cfg.max_dz_per_step, absorption_dz=cfg.absorption_dz,
        snapshot_every=cfg.snapshot_every,
        reference_area=reference_area, origin=cfg.grid.origin,
    )
    est.fit(model).transform(initial_field)
    return est.record_
