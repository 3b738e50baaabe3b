import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodline.rasters import (
    FEET_TO_METERS,
    RasterGrid,
    RasterParseError,
    neighborhood_mean,
    parse_ascii_grid,
    point_sample,
    serialize_ascii_grid,
    to_meters,
)

SIMPLE_2X2 = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4\n"


class TestParse:
    def test_first_data_row_is_top(self):
        grid = parse_ascii_grid(SIMPLE_2X2)
        assert grid.values[0, 0] == 1.0  # top-left
        assert grid.values[1, 0] == 3.0  # bottom-left

    def test_count_mismatch_reports_line(self):
        with pytest.raises(RasterParseError, match="expected 4 data values, found 3"):
            parse_ascii_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3\n")

    def test_too_many_values_reports_line(self):
        with pytest.raises(RasterParseError, match="line 8: more than 4 data values"):
            parse_ascii_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4\n5\n")

    def test_nodata_cell(self):
        text = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -9999\n-9999 5\n"
        grid = parse_ascii_grid(text)
        assert not grid.is_valid(0, 0)
        assert grid.is_valid(0, 1)

    def test_default_nodata(self):
        grid = parse_ascii_grid("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n-9999\n")
        assert not grid.is_valid(0, 0)

    def test_missing_header_key(self):
        with pytest.raises(RasterParseError, match="missing header key.*cellsize"):
            parse_ascii_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\n1 2 3 4\n")

    def test_non_numeric_token_reports_line(self):
        with pytest.raises(RasterParseError, match="line 6: non-numeric token 'oops'"):
            parse_ascii_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 oops\n3 4\n")

    def test_header_case_insensitive(self):
        text = "NCOLS 1\nNROWS 1\nXLLCORNER 2\nYLLCORNER 3\nCELLSIZE 0.5\nNODATA_VALUE -1\n7\n"
        grid = parse_ascii_grid(text)
        assert (grid.ncols, grid.nrows, grid.xll, grid.yll, grid.cellsize, grid.nodata) == (1, 1, 2.0, 3.0, 0.5, -1.0)


class TestPointSample:
    def grid(self):
        return parse_ascii_grid(SIMPLE_2X2)

    def test_cell_center(self):
        # cell centers: (0.5, 1.5) is top-left value 1
        assert point_sample(self.grid(), 0.5, 1.5).value == 1.0
        assert point_sample(self.grid(), 1.5, 0.5).value == 4.0

    def test_outside_extent(self):
        result = point_sample(self.grid(), -0.1, 0.5)
        assert result.value is None and result.valid_pixel_count == 0

    def test_boundary_goes_east_north(self):
        # x=1 is the shared vertical boundary: east cell (col 1) wins
        assert point_sample(self.grid(), 1.0, 0.5).value == 4.0
        # y=1 is the shared horizontal boundary: north cell (top row) wins
        assert point_sample(self.grid(), 0.5, 1.0).value == 1.0

    def test_nodata_is_missing(self):
        text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value 9\n9\n"
        assert point_sample(parse_ascii_grid(text), 0.5, 0.5).value is None


def grid_from_array(values, nodata=-9999.0):
    values = np.asarray(values, dtype=float)
    return RasterGrid(values.shape[1], values.shape[0], 0.0, 0.0, 1.0, values, nodata=nodata)


class TestNeighborhoodMean:
    def test_constant_grid(self):
        grid = grid_from_array(np.full((3, 3), 7.0))
        res = neighborhood_mean(grid, 1.5, 1.5)
        assert res.value == 7.0 and res.valid_pixel_count == 6

    def test_exactly_six_valid(self):
        values = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [-9999, -9999, -9999]])
        res = neighborhood_mean(grid_from_array(values), 1.5, 1.5)
        assert res.value == pytest.approx(3.5)
        assert res.valid_pixel_count == 6

    def test_no_valid_cells(self):
        res = neighborhood_mean(grid_from_array(np.full((3, 3), -9999.0)), 1.5, 1.5)
        assert res.value is None and res.valid_pixel_count == 0

    def test_uses_six_nearest(self):
        # point at the center cell's center: the 4 edge-adjacent cells are
        # nearer than the 4 corners; with the center cell that is 5, so one
        # corner (tie broken by row, col) completes the six
        values = np.arange(9, dtype=float).reshape(3, 3) + 1.0
        res = neighborhood_mean(grid_from_array(values), 1.5, 1.5)
        assert res.valid_pixel_count == 6
        # center 5, edges 2,4,6,8, first corner by (row, col) is 1
        assert res.value == pytest.approx(np.mean([5.0, 2.0, 4.0, 6.0, 8.0, 1.0]))

    def test_fewer_than_six_uses_all(self):
        values = np.full((3, 3), -9999.0)
        values[0, 0] = 2.0
        values[1, 1] = 4.0
        res = neighborhood_mean(grid_from_array(values), 1.5, 1.5)
        assert res.valid_pixel_count == 2
        assert res.value == pytest.approx(3.0)

    def test_agrees_with_point_sample_on_uniform_block(self):
        grid = grid_from_array(np.full((5, 5), 3.25))
        assert neighborhood_mean(grid, 2.5, 2.5).value == point_sample(grid, 2.5, 2.5).value

    def test_edge_of_grid(self):
        grid = grid_from_array(np.full((3, 3), 1.0))
        res = neighborhood_mean(grid, 0.5, 0.5)  # corner cell: 4 in-bounds neighbors
        assert res.valid_pixel_count == 4
        assert res.value == 1.0


class TestToMeters:
    def test_one_foot(self):
        assert to_meters(1.0, "feet") == 0.3048

    def test_zero(self):
        assert to_meters(0.0, "feet") == 0.0

    def test_ten_feet_exact_single_multiplication(self):
        assert to_meters(10.0, "feet") == 10.0 * FEET_TO_METERS

    def test_meters_unchanged(self):
        assert to_meters(5.5, "meters") == 5.5


class TestRoundTrip:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12))
    def test_parse_serialize_identity(self, seed, nrows, ncols):
        gen = np.random.default_rng(seed)
        values = gen.uniform(-100, 100, size=(nrows, ncols))
        values[gen.uniform(size=values.shape) < 0.2] = -9999.0
        grid = RasterGrid(ncols, nrows, gen.uniform(-10, 10), gen.uniform(-10, 10), gen.uniform(0.1, 5.0), values)
        again = parse_ascii_grid(serialize_ascii_grid(grid))
        assert np.array_equal(again.values, grid.values)
        assert (again.ncols, again.nrows, again.xll, again.yll, again.cellsize, again.nodata) == (
            grid.ncols,
            grid.nrows,
            grid.xll,
            grid.yll,
            grid.cellsize,
            grid.nodata,
        )
