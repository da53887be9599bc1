import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from softterrain.terrain import (TerrainLayout, TileGrid, build_layout, calibrate_stiffness, constant_layout,
                                 tile_energy, tile_step)

DT = 0.001


def soft(depth, m=1.0):
    k = calibrate_stiffness(depth)
    return k, 2.0 * math.sqrt(k * m), m


def test_calibration_examples():
    assert calibrate_stiffness(0.05, 25.0, 9.81) == pytest.approx(1226.25, abs=1e-9)
    assert calibrate_stiffness(0.02, 25.0) == pytest.approx(3065.625, abs=1e-9)


@given(st.floats(1e-3, 0.5))
def test_stiffness_inverse_in_depth(d):
    assert calibrate_stiffness(d) * d == pytest.approx(25.0 * 9.81 / 4, rel=1e-12)


@pytest.mark.parametrize("d", [0.0, -0.01])
def test_calibration_domain(d):
    with pytest.raises(ValueError):
        calibrate_stiffness(d)


def test_rigid_tile_has_no_spring():
    g = TileGrid(2, 2)
    g.set_tile(0, 0, None)
    g.set_tile(1, 1, 0.05)
    assert g.rigid[0, 0] and g.k[0, 0] == 0
    assert not g.rigid[1, 1] and g.k[1, 1] == pytest.approx(1226.25)
    assert g.c[1, 1] == pytest.approx(2 * math.sqrt(1226.25))


def test_tile_equilibrium():
    k, c, m = soft(0.03)
    assert tile_step(0.0, 0.0, k, c, m, 0.0, DT) == (0.0, 0.0)


def test_constant_load_settles_at_depth():
    d = 0.04
    k, c, m = soft(d)
    z = zd = 0.0
    for _ in range(5000):
        z, zd = tile_step(z, zd, k, c, m, k * d, DT)
    assert z == pytest.approx(-d, abs=1e-4)


def test_critically_damped_release_has_no_redip():
    k, c, m = soft(0.05)
    z, zd = -0.05, 0.0
    zs = []
    for _ in range(3000):
        z, zd = tile_step(z, zd, k, c, m, 0.0, DT)
        zs.append(z)
    zs = np.array(zs)
    assert zs.max() <= 0.0
    # climbs back monotonically: nothing overshoots, nothing dips again
    assert np.all(np.diff(zs) >= 0.0)
    assert zs[-1] == pytest.approx(0.0, abs=1e-6)


def test_unforced_energy_non_increasing(rng):
    k, c, m = soft(0.02)
    for _ in range(50):
        z, zd = -rng.uniform(0, 0.06), rng.uniform(-1, 1)
        e = tile_energy(z, zd, k, m)
        for _ in range(300):
            z, zd = tile_step(z, zd, k, c, m, 0.0, DT)
            e2 = tile_energy(z, zd, k, m)
            assert e2 <= e + 1e-15
            e = e2


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 500.0), min_size=1, max_size=200), st.floats(0.005, 0.05))
def test_tiles_never_rise(forces, depth):
    k, c, m = soft(depth)
    z = zd = 0.0
    for f in forces:
        z, zd = tile_step(z, zd, k, c, m, f, DT)
        assert z <= 0.0


def test_tile_step_bad_dt():
    with pytest.raises(ValueError):
        tile_step(0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0)


def test_grid_step_skips_rigid():
    g = TileGrid(3, 3)
    g.set_tile(1, 1, 0.05)
    f = np.full((3, 3), 100.0)
    g.step(f, DT)
    assert g.z[1, 1] < 0
    assert np.count_nonzero(g.z) == 1


def test_height_queries():
    g = TileGrid.flat(4.0, 2.0)
    assert g.height_at(0.3, -0.7) == 0.0
    g.z[3, 4] = -0.03
    cx, cy = g.tile_center(3, 4)
    assert g.height_at(cx + 0.05, cy - 0.05) == -0.03


def test_boundary_tie_break():
    g = TileGrid(4, 4)
    edge = g.x0 + 2 * g.tile_size
    assert g.tile_of(edge, 0.1) == (1, 0)
    assert g.tile_of(0.1, g.y0 + g.tile_size) == (0, 0)


def test_height_outside_grid_flagged():
    g = TileGrid.flat(2.0, 2.0)
    g.z[:] = -0.02
    assert g.height_at(5.0, 0.0, return_flag=True) == (0.0, True)
    assert g.height_at(0.0, 0.0, return_flag=True) == (-0.02, False)


def test_layout_determinism():
    a = build_layout(np.random.default_rng(3), 2.0)
    b = build_layout(np.random.default_rng(3), 2.0)
    assert a == b


def test_layout_stripes():
    lay = build_layout(np.random.default_rng(0), 2.0, total_length=10.0)
    assert len(lay.starts) == 5 and lay.depths[0] == 0.02
    assert lay.starts == [0.0, 2.0, 4.0, 6.0, 8.0]


def test_layout_changes_depth_mostly():
    lay = build_layout(np.random.default_rng(1), 2.0, total_length=400.0)
    same = sum(a == b for a, b in zip(lay.depths[:-1], lay.depths[1:]))
    # resampling once leaves a 1/25 chance of a repeat
    assert same / (len(lay.depths) - 1) < 0.12
    assert set(lay.depths) == {None, 0.02, 0.03, 0.04, 0.05}


def test_constant_depth_set():
    lay = build_layout(np.random.default_rng(0), 8.0, depth_set=(0.05,), first_depth=0.05)
    assert set(lay.depths) == {0.05}


def test_layout_validation():
    with pytest.raises(ValueError):
        TerrainLayout([0.0, 3.0], [0.02, 0.03], 2.0)
    with pytest.raises(ValueError):
        build_layout(np.random.default_rng(0), 0.0)


def test_layout_serialization_round_trip():
    lay = build_layout(np.random.default_rng(5), 8.0)
    assert TerrainLayout.from_records(lay.to_records()) == lay


def test_apply_layout_rows():
    g = TileGrid.flat(10.0, 1.0, center=(4.0, 0.0)).apply_layout(constant_layout(0.03, -1.0, 12.0))
    assert np.all(~g.rigid) and np.allclose(g.depth, 0.03)
    lay = TerrainLayout([-1.0, 1.0], [None, 0.05], 2.0)
    g = TileGrid.flat(4.0, 1.0).apply_layout(lay)
    assert g.rigid[:15].all() and not g.rigid[15:].any()  # row centres below x = 1
