import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import pytest  # noqa: E402
from hypothesis import HealthCheck, settings  # noqa: E402

from hbnwave.config import default_data_dir  # noqa: E402
from hbnwave.lattice import build_supercell, load_species_file, punch_hole  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def species_file():
    return load_species_file(default_data_dir() / "hbn_species.json")


@pytest.fixture(scope="session")
def species_pair(species_file):
    return species_file.species["boron"], species_file.species["nitrogen"]


@pytest.fixture(scope="session")
def pristine(species_pair):
    return build_supercell(12, 2.504, species_pair)


@pytest.fixture(scope="session")
def hole6(pristine, species_file):
    return punch_hole(pristine, species_file.holes["hole_6A"])
