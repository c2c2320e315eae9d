"""Helium matter-wave transmission and diffraction through holes in hBN monolayers.

Pipeline: build a supercell and punch a hole (:mod:`hbnwave.lattice`), sample
the atom-surface potential (:mod:`hbnwave.potential`), propagate the
transverse wavefunction through the layer (:mod:`hbnwave.tdse`), project it
to a distant screen (:mod:`hbnwave.farfield`) and collect transmission
datasets (:mod:`hbnwave.metrics`).
"""
import os

# OpenMP avoids numba's TBB version warning; users may still override it
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .exceptions import ConfigurationError, NumericalStabilityError  # noqa: E402
from .farfield import (  # noqa: E402
    DiffractionPattern,
    KirchhoffDiffraction,
    de_broglie_wavelength,
    fraunhofer_propagate,
    kirchhoff_propagate,
)
from .lattice import (  # noqa: E402
    AtomSpecies,
    HoleSpec,
    MonolayerModel,
    build_supercell,
    load_species_file,
    punch_hole,
    reference_circle_area,
)
from .metrics import kinetic_energy, run_velocity_sweep  # noqa: E402
from .potential import GridSpec, PotentialParams, casimir_polder, sample_slice  # noqa: E402
from .tdse import RunConfig, TransversePropagator, WaveField, propagate, split_step  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "AtomSpecies", "ConfigurationError", "DiffractionPattern", "GridSpec", "HoleSpec",
    "KirchhoffDiffraction", "MonolayerModel", "NumericalStabilityError", "PotentialParams",
    "RunConfig", "TransversePropagator", "WaveField", "build_supercell", "casimir_polder",
    "de_broglie_wavelength", "fraunhofer_propagate", "kinetic_energy", "kirchhoff_propagate",
    "load_species_file", "propagate", "punch_hole", "reference_circle_area",
    "run_velocity_sweep", "sample_slice", "split_step",
]
