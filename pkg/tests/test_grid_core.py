import numpy as np
import pytest

from pde_forge.errors import ArgumentError, DataError, DatasetIOError, FormatError, ShapeError
from pde_forge.grid_core import (
    DataField, Dataset, Grid, field_l2_norm, format_dataset, load_dataset, save_dataset,
)

GOOD_FILE = """# written by hand
EPDE-GRID v1
vars: u,w
dims: t,x
shape: 3 3
axis t: 0.0 0.5
axis x: -1.0 0.25

field: u
1 2 3 4
5 6 7 8 9
field: w
0 0 0 0 0 0 0 0 1
"""


def test_grid_layout():
    grid = Grid(("t", "x", "y"), (3, 4, 5), (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    assert grid.size == 60
    assert grid.strides == (20, 5, 1)
    assert grid.flat_index((1, 2, 3)) == 33
    assert grid.unravel(33) == (1, 2, 3)


@pytest.mark.parametrize("kwargs", [
    dict(dim_names=("t", "t"), shape=(3, 3), origins=(0, 0), steps=(1, 1)),
    dict(dim_names=("t", "x"), shape=(3, 2), origins=(0, 0), steps=(1, 1)),
    dict(dim_names=("t", "x"), shape=(3, 3), origins=(0, 0), steps=(1, 0)),
    dict(dim_names=("t", "x"), shape=(3, 3, 3), origins=(0, 0), steps=(1, 1)),
])
def test_grid_rejects_bad_layouts(kwargs):
    with pytest.raises(ShapeError):
        Grid(**kwargs)


def test_axis_lookup():
    grid = Grid(("t", "x"), (3, 4), (0.0, 1.0), (0.5, 0.25))
    assert grid.axis_index("x") == 1
    assert grid.axis_index(0) == 0
    with pytest.raises(ArgumentError):
        grid.axis_index("y")
    with pytest.raises(ArgumentError):
        grid.axis_index(2)


def test_coordinates_broadcast_row_major():
    grid = Grid(("t", "x"), (3, 4), (0.0, 1.0), (0.5, 0.25))
    x = grid.coordinates("x").reshape(grid.shape)
    t = grid.coordinates("t").reshape(grid.shape)
    np.testing.assert_allclose(x[2], [1.0, 1.25, 1.5, 1.75])
    np.testing.assert_allclose(t[:, 3], [0.0, 0.5, 1.0])


def test_field_validation(small_grid):
    values = np.zeros(small_grid.size)
    values[5] = np.nan
    with pytest.raises(DataError) as info:
        DataField("u", small_grid, values)
    assert info.value.index == 5
    with pytest.raises(ShapeError):
        DataField("u", small_grid, np.zeros(small_grid.size - 1))


def test_field_values_are_read_only(small_grid):
    f = DataField("u", small_grid, np.ones(small_grid.size))
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_dataset_requires_unique_names(small_grid):
    f = DataField("u", small_grid, np.ones(small_grid.size))
    with pytest.raises(ShapeError):
        Dataset(small_grid, (f, f))


def test_load_reads_values_in_declared_order(tmp_path):
    path = tmp_path / "data.grid"
    path.write_text(GOOD_FILE)
    dataset = load_dataset(path)
    assert dataset.variable_names == ("u", "w")
    assert dataset.grid.origins == (0.0, -1.0)
    np.testing.assert_array_equal(dataset.field("u").as_array()[1], [4, 5, 6])
    assert dataset.field("w").values[-1] == 1.0


def test_save_load_round_trip_is_bit_exact(tmp_path, small_dataset):
    path = tmp_path / "small.grid"
    save_dataset(small_dataset, path, ["a comment"])
    loaded = load_dataset(path)
    assert loaded.grid == small_dataset.grid
    for name in small_dataset.variable_names:
        np.testing.assert_array_equal(loaded.field(name).values, small_dataset.field(name).values)
    assert format_dataset(loaded) == format_dataset(small_dataset)


def test_bad_magic_reports_physical_line(tmp_path):
    path = tmp_path / "bad.grid"
    path.write_text("# comment\nEPDE-GRID v2\n")
    with pytest.raises(FormatError) as info:
        load_dataset(path)
    assert info.value.line == 2


def test_value_count_mismatch(tmp_path):
    path = tmp_path / "short.grid"
    path.write_text(GOOD_FILE.replace("0 0 0 0 0 0 0 0 1", "0 0 1"))
    with pytest.raises(ShapeError):
        load_dataset(path)


def test_non_finite_value_names_flat_index(tmp_path):
    path = tmp_path / "nan.grid"
    path.write_text(GOOD_FILE.replace("5 6 7 8 9", "5 6 nan 8 9"))
    with pytest.raises(DataError) as info:
        load_dataset(path)
    assert info.value.index == 6


def test_undeclared_field(tmp_path):
    path = tmp_path / "extra.grid"
    path.write_text(GOOD_FILE.replace("field: w", "field: z"))
    with pytest.raises(FormatError):
        load_dataset(path)


def test_missing_file(tmp_path):
    with pytest.raises(DatasetIOError):
        load_dataset(tmp_path / "missing.grid")


def test_l2_norm():
    assert field_l2_norm([3.0, 4.0]) == pytest.approx(5.0)
    with pytest.raises(ArgumentError):
        field_l2_norm([])
    with pytest.raises(DataError):
        field_l2_norm([1.0, np.inf])
