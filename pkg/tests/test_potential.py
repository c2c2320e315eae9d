import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hbnwave.exceptions import ConfigurationError
from hbnwave.lattice import AtomSpecies, MonolayerModel
from hbnwave.potential import (
    GridSpec,
    PotentialParams,
    SliceTable,
    casimir_polder,
    electrostatic,
    filter_value,
    sample_slice,
    single_filter,
)
from hbnwave.units import COULOMB

ALPHA0 = 0.2050522


def brute_cp(point, atoms):
    """Plain-Python pairwise sum, no cutoff: atoms are (pos, c6, D) tuples."""
    total = 0.0
    for pos, c6, d in atoms:
        r = [pos[i] - point[i] for i in range(3)]
        r2 = sum(c * c for c in r)
        quad = sum(r[i] * d[i][j] * r[j] for i in range(3) for j in range(3))
        tr = d[0][0] + d[1][1] + d[2][2]
        total -= c6 / (6.0 * r2**3) * (tr + 3.0 * quad / r2)
    return total


def brute_el(point, atoms, alpha0):
    s = 0.0
    for pos, q in atoms:
        s += q / sum((pos[i] - point[i]) ** 2 for i in range(3))
    return -0.5 * alpha0 * COULOMB * s * s


def model_from(positions, species, index):
    return MonolayerModel(np.asarray(positions, float), index, tuple(species), 2.504, (0.0, 0.0))


ISO = AtomSpecies("iso", 4.2, np.eye(3), 0.3, 1.5)
ANISO = AtomSpecies("aniso", 2.0, [[1.2, 0.1, 0.0], [0.1, 0.9, 0.05], [0.0, 0.05, 0.7]], -0.3, 1.3)

coord = st.floats(-6.0, 6.0)


@given(st.floats(2.0, 12.0), st.floats(0, math.pi), st.floats(0, 2 * math.pi))
def test_isotropic_single_atom_is_minus_c6_over_r6(r, theta, phi):
    m = model_from([[0.0, 0.0, 0.0]], [ISO], [0])
    p = (r * math.sin(theta) * math.cos(phi), r * math.sin(theta) * math.sin(phi), r * math.cos(theta))
    assert casimir_polder(p, m, cutoff=None) == pytest.approx(-ISO.c6 / r**6, rel=1e-12)


def test_two_atom_midpoint_hand_sum():
    m = model_from([[-1.5, 0, 0], [1.5, 0, 0]], [ISO, ANISO], [0, 1])
    p = (0.0, 0.4, 2.0)
    atoms = [(m.positions[i], m.c6[i], m.d_matrices[i]) for i in range(2)]
    assert casimir_polder(p, m, cutoff=None) == pytest.approx(brute_cp(p, atoms), rel=1e-13)


@given(st.lists(st.tuples(coord, coord), min_size=1, max_size=6, unique=True),
       st.tuples(coord, coord, st.floats(1.0, 4.0)))
def test_point_sums_match_brute_force(xy, point):
    pos = [[x, y, 0.0] for x, y in xy]
    idx = [i % 2 for i in range(len(pos))]
    m = model_from(pos, [ISO, ANISO], idx)
    cp_atoms = [(m.positions[i], m.c6[i], m.d_matrices[i]) for i in range(len(m))]
    el_atoms = [(m.positions[i], m.charges[i]) for i in range(len(m))]
    assert casimir_polder(point, m, cutoff=None) == pytest.approx(brute_cp(point, cp_atoms), rel=1e-12)
    assert electrostatic(point, m, ALPHA0, cutoff=None) == pytest.approx(
        brute_el(point, el_atoms, ALPHA0), rel=1e-12, abs=1e-300)


@given(st.tuples(coord, coord, st.floats(0.5, 4.0)))
def test_electrostatic_never_positive(point):
    m = model_from([[0, 0, 0], [1.4, 0, 0], [0, 2.0, 0]], [ISO, ANISO], [0, 1, 1])
    assert electrostatic(point, m, ALPHA0) <= 0.0


def test_no_atoms_within_cutoff_is_zero():
    m = model_from([[0.0, 0.0, 0.0]], [ISO], [0])
    assert casimir_polder((20.0, 0.0, 0.0), m, cutoff=12.0) == 0.0
    assert electrostatic((20.0, 0.0, 0.0), m, ALPHA0, cutoff=12.0) == 0.0


def test_filter_closed_form():
    rv = 1.92
    assert single_filter(0.8 * rv, rv) == 0.0
    assert single_filter(0.9 * rv, rv) == pytest.approx(0.25, abs=1e-12)
    assert single_filter(rv, rv) == pytest.approx(1.0, abs=1e-12)
    assert single_filter(0.5 * rv, rv) == 0.0
    assert single_filter(3 * rv, rv) == 1.0


@given(st.floats(0.1, 3.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_filter_bounded_and_monotone(rv, r1, r2):
    a, b = sorted((r1, r2))
    fa, fb = single_filter(a, rv), single_filter(b, rv)
    assert 0.0 <= fa <= fb <= 1.0


def test_filter_is_product():
    m = model_from([[0, 0, 0], [2.0, 0, 0]], [ISO, ANISO], [0, 1])
    p = (1.0, 0.5, 0.3)
    r = np.linalg.norm(m.positions - np.array(p), axis=1)
    want = single_filter(r[0], ISO.vdw_radius) * single_filter(r[1], ANISO.vdw_radius)
    assert filter_value(p, m) == pytest.approx(float(want), rel=1e-14)


def test_grid_layout():
    g = GridSpec(16.0, 32, (1.0, -2.0))
    assert g.x[16] == 1.0 and g.y[16] == -2.0
    assert g.spacing == 0.5
    X, Y = g.mesh()
    assert X[0, 5] == g.x[5] and Y[7, 0] == g.y[7]
    with pytest.raises(ConfigurationError):
        GridSpec(16.0, 48)
    with pytest.raises(ConfigurationError):
        GridSpec(-1.0, 32)


def test_sampled_slice_matches_point_functions(hole6):
    g = GridSpec(15.9, 16, hole6.center)
    params = PotentialParams(cutoff=12.0)
    pot, filt = sample_slice(hole6, g, 1.7, params)
    rng = np.random.default_rng(1)
    for iy, ix in rng.integers(0, 16, size=(12, 2)):
        p = (g.x[ix], g.y[iy], 1.7)
        want = casimir_polder(p, hole6, 12.0) + electrostatic(p, hole6, ALPHA0, 12.0)
        if pot.clamped[iy, ix]:
            assert abs(pot.values[iy, ix]) == params.u_max
        else:
            assert pot.values[iy, ix] == pytest.approx(want, rel=1e-12)
        assert filt.values[iy, ix] == pytest.approx(filter_value(p, hole6), rel=1e-12, abs=1e-15)


def test_cutoff_covering_model_equals_unconditional(hole6):
    g = GridSpec(15.9, 16, hole6.center)
    lo, hi = hole6.positions.min(axis=0), hole6.positions.max(axis=0)
    span = float(np.linalg.norm(hi - lo)) + g.diagonal
    pot, _ = sample_slice(hole6, g, 2.0, PotentialParams(cutoff=span))
    X, Y = g.mesh()
    want = np.array([
        casimir_polder((x, y, 2.0), hole6, None) + electrostatic((x, y, 2.0), hole6, ALPHA0, None)
        for x, y in zip(X.ravel(), Y.ravel())
    ]).reshape(X.shape)
    assert np.allclose(pot.values, want, rtol=1e-12, atol=0)


def test_hole_centre_default_cutoff_tail(hole6):
    p = (*hole6.center, 2.0)
    full = casimir_polder(p, hole6, None)
    assert abs(casimir_polder(p, hole6, 12.0) - full) / abs(full) < 1e-2


@pytest.mark.xfail(strict=True, reason="truncating at the grid diagonal (22.5 A) leaves "
                   "~2e-5 relative error in U_CP at the 6 A hole centre, z = 2 A")
def test_grid_diagonal_cutoff_tail_within_1e6(hole6):
    g = GridSpec(15.9, 128, hole6.center)
    p = (*hole6.center, 2.0)
    full = casimir_polder(p, hole6, None) + electrostatic(p, hole6, ALPHA0, None)
    cut = casimir_polder(p, hole6, g.diagonal) + electrostatic(p, hole6, ALPHA0, g.diagonal)
    assert abs(cut - full) / abs(full) < 1e-6


def test_clamp_at_atom(hole6):
    # a node directly on an atom at the plane height is clamped
    a = hole6.positions[0]
    g = GridSpec(1.6, 16, (a[0], a[1]))
    pot, filt = sample_slice(hole6, g, 0.0, PotentialParams(u_max=50.0))
    assert pot.clamped[8, 8]
    assert pot.values[8, 8] == -50.0
    assert filt.values[8, 8] == 0.0
    assert np.all(np.abs(pot.values) <= 50.0)


def test_slice_table_interpolates(hole6):
    g = GridSpec(15.9, 16, hole6.center)
    t = SliceTable(hole6, g, z_step=0.1)
    u0, f0 = t.get(t.key(1.0))
    u1, f1 = t.get(t.key(1.0) + 1)
    z0 = t.key(1.0) * 0.1
    u, f = t.at(z0 + 0.025)
    assert np.allclose(u, 0.75 * u0 + 0.25 * u1, rtol=1e-13)
    # far from the plane the filter is identically one and stored as None
    assert t.at(3.5)[1] is None
    assert t.open_max(t.key(3.5)) > 0


def test_potential_params_validation():
    with pytest.raises(ConfigurationError):
        PotentialParams(cutoff=0.0)
    with pytest.raises(ConfigurationError):
        PotentialParams(u_max=-1.0)
