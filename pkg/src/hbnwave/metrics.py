"""Transmission datasets: velocity sweeps and unit checks."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigurationError, NumericalStabilityError
from .lattice import punch_hole, reference_circle_area
from .tdse import propagate
from .units import AMU_A2_FS2, HELIUM_MASS, KM_S

log = logging.getLogger(__name__)

VELOCITY_RANGE = (0.05, 200.0)
CSV_HEADER = ("velocity_km_s", "hole_name", "relative_transmission", "wall_time_s")


def kinetic_energy(velocity, mass=HELIUM_MASS):
    """``m v^2 / 2`` in eV for ``velocity`` in km/s and ``mass`` in amu."""
    if velocity < 0:
        raise ConfigurationError(f"velocity must be non-negative, got {velocity!r}")
    v = velocity * KM_S
    return 0.5 * mass * v * v * AMU_A2_FS2


def default_velocities(n=12, lo=0.1, hi=20.0):
    """Logarithmic velocity grid (km/s)."""
    return np.geomspace(lo, hi, n)


@dataclass
class VelocitySweep:
    """Final relative transmission per velocity for one hole.

    Failed runs appear as ``nan`` with a message in ``diagnostics``.
    """

    hole: str
    velocities: np.ndarray
    transmissions: np.ndarray
    wall_times: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def at(self, velocity):
        i = int(np.argmin(np.abs(self.velocities - velocity)))
        if not math.isclose(self.velocities[i], velocity, rel_tol=1e-9):
            raise KeyError(velocity)
        return float(self.transmissions[i])


def _check_velocities(velocities):
    v = np.asarray(velocities, dtype=float)
    if v.ndim != 1 or len(v) == 0:
        raise ConfigurationError("velocities must be a non-empty list")
    if np.any(np.diff(v) <= 0):
        raise ConfigurationError("velocities must be strictly increasing")
    lo, hi = VELOCITY_RANGE
    if v[0] < lo or v[-1] > hi:
        raise ConfigurationError(f"velocities must lie within [{lo}, {hi}] km/s")
    return v


def _one_run(args):
    model, hole, velocity, cfg_template = args
    holed = punch_hole(model, hole)
    grid = replace(cfg_template.grid, origin=holed.center)
    cfg = replace(cfg_template, velocity=float(velocity), hole=hole.name, grid=grid)
    area = reference_circle_area(hole)
    t0 = time.perf_counter()
    try:
        rec = propagate(holed, cfg, reference_area=area)
        value, diag = float(rec.relative_transmission[-1]), None
    except NumericalStabilityError as exc:
        value, diag = math.nan, str(exc)
    return value, time.perf_counter() - t0, diag


def run_velocity_sweep(model, holes, velocities, cfg_template, workers=1):
    """Propagate the pristine ``model`` with each hole at each velocity.

    Parameters
    ----------
    model : MonolayerModel
        Pristine supercell; each hole is punched into it.
    holes : sequence of HoleSpec
    velocities : sequence of float
        Strictly increasing, km/s, within ``VELOCITY_RANGE``.
    cfg_template : RunConfig
        Template whose ``velocity``, ``hole`` and grid origin (moved to the
        hole centre) are replaced per run; with
        ``dt=None`` each run picks its own step schedule.
    workers : int
        Process pool size; ``1`` runs in-process and reuses potential tables
        across velocities.

    Returns
    -------
    dict of str to VelocitySweep
    """
    v = _check_velocities(velocities)
    jobs = [(model, h, float(x), cfg_template) for h in holes for x in v]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]
    out = {}
    for k, h in enumerate(holes):
        chunk = results[k * len(v):(k + 1) * len(v)]
        diags = {}
        for x, (_, _, d) in zip(v, chunk):
            if d is not None:
                log.warning("sweep point %s @ %g km/s failed: %s", h.name, x, d)
                diags[float(x)] = d
        out[h.name] = VelocitySweep(
            hole=h.name, velocities=v.copy(),
            transmissions=np.array([c[0] for c in chunk]),
            wall_times=np.array([c[1] for c in chunk]),
            diagnostics=diags,
        )
    return out


def _fmt(x):
    return "nan" if not math.isfinite(x) else repr(float(x))


def sweep_csv(sweeps, record_wall_time=False):
    """CSV text ``velocity_km_s,hole_name,relative_transmission,wall_time_s``.

    Wall times make the output non-reproducible, so the column is left empty
    unless ``record_wall_time`` is set.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for name in sorted(sweeps):
        s = sweeps[name]
        for v, t, wt in zip(s.velocities, s.transmissions, s.wall_times):
            w.writerow([_fmt(v), name, _fmt(t), f"{wt:.3f}" if record_wall_time else ""])
    return buf.getvalue()


def transmission_csv(record):
    """CSV text ``z_angstrom,relative_transmission`` of a propagation record."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("z_angstrom", "relative_transmission"))
    for z, t in record.rows():
        w.writerow([_fmt(z), _fmt(t)])
    return buf.getvalue()
