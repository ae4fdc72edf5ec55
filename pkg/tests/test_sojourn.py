import numpy as np
import pytest

from sojournlab.gaussim import Field2D, GridSpec, Lattice2D, SamplePath
from sojournlab.sojourn import (batch_levels, level_for_sojourn, level_rank,
                                reduction_quadrature, sojourn_profile,
                                sojourn_time, supremum)


def _path(values, step=0.25):
    g = GridSpec(0.0, step * (len(values) - 1), len(values))
    return SamplePath(g, np.asarray(values, dtype=float))


def test_level_rank_basic():
    assert level_rank(0.0, 0.25) == 1
    assert level_rank(0.1, 0.25) == 1
    assert level_rank(0.25, 0.25) == 2
    assert level_rank(0.26, 0.25) == 2
    assert level_rank(0.5, 0.25) == 3
    with pytest.raises(ValueError):
        level_rank(-0.1, 0.25)


def test_level_rank_float_boundary():
    # 0.3 / 0.1 is 2.9999999999999996 in floats; the rank must still be 4
    assert level_rank(0.3, 0.1) == 4
    assert level_rank(3 * 0.1, 0.1) == 4


def test_sojourn_time_counts_strict_exceedances():
    p = _path([1.0, 0.5, 0.5, -1.0, 2.0])
    assert sojourn_time(p, 0.5) == 2 * 0.25
    assert sojourn_time(p, -2.0) == 5 * 0.25
    assert sojourn_time(p, 2.0) == 0.0


def test_sojourn_profile_is_a_decreasing_step_function():
    p = _path([0.3, -0.2, 0.9, 0.9, 0.1])
    prof = sojourn_profile(p)
    assert prof.step == 0.25
    assert list(prof.values) == sorted(prof.values, reverse=True)
    assert prof.total == 5 * 0.25
    # time above z drops as z passes each distinct value
    assert prof.time_above(0.89) == 2 * 0.25
    assert prof.time_above(0.9) == 0.0
    assert prof.time_above(-1.0) == prof.total


def test_level_for_sojourn_matches_direct_count():
    """z_x is the smallest level whose sojourn time does not exceed x."""
    rng = np.random.default_rng(12)
    vals = rng.standard_normal(40)
    p = _path(vals, step=0.1)
    for x in (0.0, 0.09, 0.35, 1.7, 3.9):
        res = level_for_sojourn(p, x)
        assert res.z is not None
        assert sojourn_time(p, res.z) <= x + 1e-12
        # just below z the sojourn time exceeds x
        assert sojourn_time(p, res.z - 1e-9) > x


def test_level_for_sojourn_out_of_range():
    p = _path([1.0, 2.0, 3.0])
    res = level_for_sojourn(p, 0.75)
    assert res.z is None
    assert res.rank > 3


def test_batch_levels_matches_scalar_route():
    rng = np.random.default_rng(5)
    vals = rng.standard_normal((30, 16))
    step = 0.125
    for x in (0.0, 0.2, 1.0, 1.99):
        z = batch_levels(vals, step, x)
        for i in range(30):
            want = level_for_sojourn(_path(vals[i], step=step), x).z
            assert np.isclose(z[i], want), (i, x)


def test_batch_levels_minus_inf_when_rank_exceeds_grid():
    vals = np.arange(8.0).reshape(2, 4)
    z = batch_levels(vals, 0.5, 2.0)
    assert np.all(np.isneginf(z))


def test_supremum():
    p = _path([0.1, -3.0, 2.5, 0.0])
    assert supremum(p) == 2.5


def test_reduction_quadrature_agrees_with_rank():
    rng = np.random.default_rng(77)
    vals = rng.standard_normal(64)
    p = SamplePath(GridSpec(0.0, 1.0, 64), vals)
    for x in (0.0, 0.13, 0.5, 0.98):
        direct = batch_levels(vals[None, :], p.grid.step, x)[0]
        quad = reduction_quadrature(p, x, rel_tol=1e-8)
        assert abs(quad - np.exp(direct)) <= 1e-7 * max(quad, 1e-300)


def test_reduction_quadrature_vanishes_past_total_time():
    p = SamplePath(GridSpec(0.0, 1.0, 9), np.ones(9))
    assert reduction_quadrature(p, 1.2) == 0.0
    assert reduction_quadrature(p, 9.0 / 8.0) == 0.0


def test_field2d_reduction_uses_cell_area():
    lat = Lattice2D(GridSpec(0.0, 1.0, 3), GridSpec(0.0, 1.0, 3))
    f = Field2D(lat, np.array([[3.0, 1.0, 0.0],
                               [2.0, -1.0, 0.5],
                               [0.0, 0.0, 0.0]]))
    # cell area 0.25, nine cells
    assert sojourn_time(f, 0.75) == 3 * 0.25
    res = level_for_sojourn(f, 0.5)
    assert res.rank == 3
    assert res.z == 1.0
    assert np.isclose(reduction_quadrature(f, 0.5), np.e)
