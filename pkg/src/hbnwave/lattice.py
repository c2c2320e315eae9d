"""hBN supercell construction, hole punching and species parameters."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError

VDW_RADIUS = {"boron": 1.92, "nitrogen": 1.55}


@dataclass(frozen=True)
class AtomSpecies:
    """Per-species interaction parameters.

    ``c6`` is in eV A^6, ``partial_charge`` in units of e and ``vdw_radius`` in A.
    ``d_matrix`` is the dimensionless anisotropy of the polarisability.
    """

    name: str
    c6: float
    d_matrix: np.ndarray
    partial_charge: float
    vdw_radius: float

    def __post_init__(self):
        d = np.asarray(self.d_matrix, dtype=float).reshape(3, 3)
        d.setflags(write=False)
        object.__setattr__(self, "d_matrix", d)
        if not (self.c6 > 0):
            raise ConfigurationError(f"{self.name}: c6 must be positive, got {self.c6}")
        if not (self.vdw_radius > 0):
            raise ConfigurationError(
                f"{self.name}: vdw_radius must be positive, got {self.vdw_radius}"
            )
        if not np.allclose(d, d.T, rtol=0, atol=1e-12):
            raise ConfigurationError(f"{self.name}: d_matrix must be symmetric")
        tr = np.trace(d)
        if not (np.isfinite(tr) and tr > 0):
            raise ConfigurationError(f"{self.name}: d_matrix trace must be positive")


@dataclass(frozen=True)
class HoleSpec:
    """A hole geometry.

    ``kind`` is ``"circular"`` (uses ``diameter``) or ``"explicit"`` (uses
    ``removed_indices``, indices into the pristine supercell). ``center`` of
    ``None`` means the hexagon centre closest to the supercell centroid.
    ``reference_area`` is the comparison circle used to normalise transmission.
    """

    name: str
    kind: str
    center: tuple[float, float] | None = None
    diameter: float | None = None
    removed_indices: tuple[int, ...] = ()
    reference_area: float | None = None

    def __post_init__(self):
        if self.kind not in ("circular", "explicit"):
            raise ConfigurationError(f"hole {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "circular":
            if self.diameter is None or not (self.diameter > 0):
                raise ConfigurationError(
                    f"hole {self.name!r}: circular diameter must be positive"
                )
        else:
            idx = tuple(int(i) for i in self.removed_indices)
            if len(set(idx)) != len(idx):
                raise ConfigurationError(
                    f"hole {self.name!r}: duplicate removed indices"
                )
            if any(i < 0 for i in idx):
                raise ConfigurationError(f"hole {self.name!r}: negative index")
            object.__setattr__(self, "removed_indices", idx)
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.reference_area is not None and not (self.reference_area > 0):
            raise ConfigurationError(
                f"hole {self.name!r}: reference_area must be positive"
            )


@dataclass(frozen=True)
class MonolayerModel:
    """Atoms of a (possibly holed) monolayer lying in the plane ``z = plane_z``.

    ``species_index[i]`` selects the entry of ``species`` for atom ``i`` and
    ``site_index[i]`` is its index in the pristine supercell. ``center`` is the
    in-plane point simulation grids are centred on.
    """

    positions: np.ndarray
    species_index: np.ndarray
    species: tuple[AtomSpecies, ...]
    lattice_constant: float
    center: tuple[float, float]
    site_index: np.ndarray = field(default=None)
    plane_z: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        sp = np.asarray(self.species_index, dtype=np.int64).reshape(-1)
        site = (
            np.arange(len(pos), dtype=np.int64)
            if self.site_index is None
            else np.asarray(self.site_index, dtype=np.int64).reshape(-1)
        )
        for a in (pos, sp, site):
            a.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "species_index", sp)
        object.__setattr__(self, "site_index", site)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def __len__(self):
        return len(self.positions)

    @property
    def c6(self):
        return np.array([s.c6 for s in self.species])[self.species_index]

    @property
    def d_matrices(self):
        return np.array([s.d_matrix for s in self.species]).reshape(-1, 3, 3)[
            self.species_index
        ]

    @property
    def charges(self):
        return np.array([s.partial_charge for s in self.species])[self.species_index]

    @property
    def vdw_radii(self):
        return np.array([s.vdw_radius for s in self.species])[self.species_index]

    @property
    def names(self):
        return [self.species[i].name for i in self.species_index]

    def fingerprint(self):
        """Hashable summary of everything the potential depends on."""
        return (
            self.positions.tobytes(),
            self.species_index.tobytes(),
            tuple(
                (s.name, s.c6, s.d_matrix.tobytes(), s.partial_charge, s.vdw_radius)
                for s in self.species
            ),
        )


def _primitive_vectors(a):
    a1 = np.array([a, 0.0])
    a2 = np.array([0.5 * a, 0.5 * math.sqrt(3.0) * a])
    return a1, a2


def hexagon_center_near(positions, lattice_constant, n_cells, target):
    """Hexagon centre of the supercell closest to ``target`` (ties: lowest cell index)."""
    a1, a2 = _primitive_vectors(lattice_constant)
    i, j = np.meshgrid(np.arange(n_cells), np.arange(n_cells), indexing="ij")
    centers = (
        i.reshape(-1, 1) * a1 + j.reshape(-1, 1) * a2 + 2.0 * (a1 + a2) / 3.0
    )
    d2 = np.sum((centers - np.asarray(target)[:2]) ** 2, axis=1)
    return tuple(centers[int(np.argmin(d2))])


def build_supercell(n_cells, lattice_constant, species_params):
    """Build an ``n_cells x n_cells`` hBN supercell.

    Parameters
    ----------
    n_cells : int
        Number of primitive cells along each lattice vector.
    lattice_constant : float
        Lattice constant in A (2.504 for hBN).
    species_params : pair of AtomSpecies
        ``(boron, nitrogen)``; the first sits at the cell origin, the second at
        ``(a1 + a2) / 3``.

    Returns
    -------
    MonolayerModel
        ``2 * n_cells**2`` atoms ordered B, N, B, N, ... cell by cell, all at z = 0.
    """
    if not isinstance(n_cells, (int, np.integer)) or isinstance(n_cells, bool) or n_cells < 1:
        raise ConfigurationError(f"n_cells must be an integer >= 1, got {n_cells!r}")
    if not (lattice_constant > 0):
        raise ConfigurationError(
            f"lattice_constant must be positive, got {lattice_constant!r}"
        )
    boron, nitrogen = species_params
    a1, a2 = _primitive_vectors(lattice_constant)
    basis = np.array([[0.0, 0.0], (a1 + a2) / 3.0])
    i, j = np.meshgrid(np.arange(n_cells), np.arange(n_cells), indexing="ij")
    origins = i.reshape(-1, 1) * a1 + j.reshape(-1, 1) * a2
    xy = (origins[:, None, :] + basis[None, :, :]).reshape(-1, 2)
    positions = np.column_stack([xy, np.zeros(len(xy))])
    species_index = np.tile([0, 1], n_cells * n_cells)
    centroid = xy.mean(axis=0)
    center = hexagon_center_near(xy, lattice_constant, n_cells, centroid)
    return MonolayerModel(
        positions=positions,
        species_index=species_index,
        species=(boron, nitrogen),
        lattice_constant=float(lattice_constant),
        center=center,
    )


def resolve_center(model, hole):
    if hole.center is not None:
        return hole.center
    return model.center


def punch_hole(model, hole):
    """Remove the atoms covered by ``hole`` and recentre the model on it.

    A circular hole removes every atom whose in-plane distance from the
    centre is strictly below ``diameter / 2``; an explicit hole removes the
    listed pristine-site indices.
    """
    if len(model) == 0:
        raise ConfigurationError("cannot punch a hole in an empty model")
    center = resolve_center(model, hole)
    if hole.kind == "circular":
        d = np.hypot(
            model.positions[:, 0] - center[0], model.positions[:, 1] - center[1]
        )
        keep = d >= 0.5 * hole.diameter
    else:
        n_sites = int(model.site_index.max()) + 1
        bad = [i for i in hole.removed_indices if i >= n_sites]
        if bad:
            raise ConfigurationError(
                f"hole {hole.name!r}: indices out of range for {n_sites} sites: {bad}"
            )
        keep = ~np.isin(model.site_index, np.asarray(hole.removed_indices, dtype=np.int64))
    n_removed = int(np.count_nonzero(~keep))
    if n_removed == 0:
        warnings.warn(f"hole {hole.name!r} removes no atoms", stacklevel=2)
    if n_removed == len(model):
        raise ConfigurationError(f"hole {hole.name!r} removes every atom")
    return replace(
        model,
        positions=model.positions[keep],
        species_index=model.species_index[keep],
        site_index=model.site_index[keep],
        center=center,
    )


def reference_circle_area(hole):
    """Area (A^2) of the comparison circle used to normalise transmission."""
    if hole.reference_area is not None:
        return float(hole.reference_area)
    if hole.kind == "circular":
        return math.pi * hole.diameter**2 / 4.0
    raise ConfigurationError(
        f"hole {hole.name!r} has no declared comparison circle (reference_area)"
    )


def write_xyz(model, path, comment=""):
    """Write atom coordinates as an XYZ text file (B/N element symbols)."""
    symbols = {"boron": "B", "nitrogen": "N"}
    lines = [str(len(model)), comment.replace("\n", " ")]
    for name, (x, y, z) in zip(model.names, model.positions):
        sym = symbols.get(name, name[:2].capitalize())
        lines.append(f"{sym} {x:.10f} {y:.10f} {z:.10f}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SpeciesFile:
    """Contents of a species-parameter JSON file."""

    species: dict
    holes: dict
    probe: dict


def _species_from_dict(d, where):
    try:
        return AtomSpecies(
            name=str(d["name"]),
            c6=float(d["c6"]),
            d_matrix=np.asarray(d["d_matrix"], dtype=float).reshape(3, 3),
            partial_charge=float(d["partial_charge"]),
            vdw_radius=float(d.get("vdw_radius", VDW_RADIUS.get(d["name"], 0.0))),
        )
    except KeyError as exc:
        raise ConfigurationError(f"{where}: missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def _hole_from_dict(d, where):
    try:
        kind = d["kind"]
        return HoleSpec(
            name=str(d["name"]),
            kind=kind,
            center=d.get("center"),
            diameter=d.get("diameter"),
            removed_indices=tuple(d.get("removed_indices", ())),
            reference_area=d.get("reference_area"),
        )
    except KeyError as exc:
        raise ConfigurationError(f"{where}: missing field {exc.args[0]!r}") from None
    except ConfigurationError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def parse_species_data(data):
    species = {}
    for k, d in enumerate(data.get("species", [])):
        s = _species_from_dict(d, f"species[{k}]")
        species[s.name] = s
    holes = {}
    for k, d in enumerate(data.get("holes", [])):
        h = _hole_from_dict(d, f"holes[{k}]")
        holes[h.name] = h
    return SpeciesFile(species=species, holes=holes, probe=dict(data.get("probe", {})))


def load_species_file(path):
    """Read species parameters, hole masks and probe constants from JSON."""
    with open(path) as fh:
        data = json.load(fh)
    return parse_species_data(data)
