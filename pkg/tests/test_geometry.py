import pytest

from csurf.errors import InvalidParams
from csurf.geometry import PyramidConfig, filter_geometry, filter_size, footprint_fits


def rect_area(r):
    x0, y0, x1, y1 = r
    return (x1 - x0 + 1) * (y1 - y0 + 1)


def test_filter_size_ladder():
    assert [filter_size(0, l) for l in range(4)] == [9, 15, 21, 27]
    assert [filter_size(1, l) for l in range(4)] == [15, 27, 39, 51]
    assert [filter_size(2, l) for l in range(4)] == [27, 51, 75, 99]


def test_smallest_filter_layout():
    g = filter_geometry(0, 0)
    assert g.size == 9
    assert g.norm_area == 81
    # d_xx: three 5-tall x 3-wide lobes straddling the center, weights 1,-2,1
    assert [w for w, _ in g.dxx_lobes] == [1, -2, 1]
    assert g.dxx_lobes == (
        (1, (-4, -2, -2, 2)),
        (-2, (-1, -2, 1, 2)),
        (1, (2, -2, 4, 2)),
    )
    assert all(rect_area(r) == 15 for _, r in g.dxx_lobes)
    # d_yy is the transpose
    assert g.dyy_lobes == (
        (1, (-2, -4, 2, -2)),
        (-2, (-2, -1, 2, 1)),
        (1, (-2, 2, 2, 4)),
    )
    # d_xy: four 3x3 corner lobes with a one-pixel cross gap
    assert [w for w, _ in g.dxy_lobes] == [1, -1, -1, 1]
    assert all(rect_area(r) == 9 for _, r in g.dxy_lobes)
    assert g.dxy_lobes[0] == (1, (-3, -3, -1, -1))


def test_lobes_stay_inside_footprint():
    for o in range(3):
        for l in range(4):
            g = filter_geometry(o, l)
            for lobes in (g.dxx_lobes, g.dyy_lobes, g.dxy_lobes):
                for _, (x0, y0, x1, y1) in lobes:
                    assert -g.half <= x0 <= x1 <= g.half
                    assert -g.half <= y0 <= y1 <= g.half


def test_weights_cancel_on_each_family():
    g = filter_geometry(1, 2)
    assert sum(w for w, _ in g.dxx_lobes) == 0
    assert sum(w for w, _ in g.dxy_lobes) == 0
    assert sum(w * rect_area(r) for w, r in g.dxy_lobes) == 0


def test_layer_three_is_27():
    assert filter_geometry(0, 3).size == 27


def test_out_of_range_indices():
    with pytest.raises(InvalidParams):
        filter_geometry(3, 0)
    with pytest.raises(InvalidParams):
        filter_geometry(0, 4)
    with pytest.raises(InvalidParams):
        filter_geometry(-1, 0)


def test_largest_weight_for_99_filter():
    g = filter_geometry(2, 3)
    assert g.size == 99
    assert g.norm_area == 9801
    assert g.dxx_lobes[1][0] == -2  # middle lobe weight -2 over area 99^2


def test_config_grids_and_footprint():
    cfg = PyramidConfig()
    assert cfg.step(0) == 1 and cfg.step(2) == 4
    assert cfg.grid_shape(64, 64, 0) == (64, 64)
    assert cfg.grid_shape(64, 64, 1) == (32, 32)
    assert cfg.grid_shape(33, 64, 1) == (17, 32)
    assert footprint_fits(4, 4, 4, 16, 16)
    assert not footprint_fits(3, 4, 4, 16, 16)
    assert not footprint_fits(12, 4, 4, 16, 16)
    with pytest.raises(InvalidParams):
        PyramidConfig(octaves=0)
