import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pde_forge.errors import ArgumentError, DataError, DatasetIOError, FormatError, ShapeError

logger = logging.getLogger(__name__)

MAGIC = "EPDE-GRID v1"
VALUES_PER_LINE = 6


@dataclass(frozen=True)
class Grid:
    """ Uniform rectilinear grid; the first axis is time by convention """
    dim_names: tuple[str, ...]
    shape: tuple[int, ...]
    origins: tuple[float, ...]
    steps: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "dim_names", tuple(self.dim_names))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "origins", tuple(float(o) for o in self.origins))
        object.__setattr__(self, "steps", tuple(float(s) for s in self.steps))

        if not (len(self.dim_names) == len(self.shape) == len(self.origins) == len(self.steps)):
            raise ShapeError("dim_names, shape, origins and steps must have the same length")
        if len(self.shape) == 0:
            raise ShapeError("a grid needs at least one axis")
        if len(set(self.dim_names)) != len(self.dim_names):
            raise ShapeError(f"axis names must be unique, got {self.dim_names}")
        if any(n < 3 for n in self.shape):
            raise ShapeError(f"every axis needs at least 3 points, got shape {self.shape}")
        if any(not (s > 0 and math.isfinite(s)) for s in self.steps):
            raise ShapeError(f"steps must be positive, got {self.steps}")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        """ Number of grid points M """
        return math.prod(self.shape)

    @property
    def strides(self) -> tuple[int, ...]:
        """ Row-major strides in elements """
        strides = [1] * self.ndim
        for axis in range(self.ndim - 2, -1, -1):
            strides[axis] = strides[axis + 1] * self.shape[axis + 1]
        return tuple(strides)

    def axis_index(self, axis: int | str) -> int:
        """ Resolve an axis given by position or by name """
        if isinstance(axis, str):
            if axis not in self.dim_names:
                raise ArgumentError(f"unknown axis '{axis}', grid axes are {self.dim_names}")
            return self.dim_names.index(axis)
        if not 0 <= axis < self.ndim:
            raise ArgumentError(f"axis {axis} out of range for a {self.ndim}-D grid")
        return int(axis)

    def flat_index(self, coords: tuple[int, ...]) -> int:
        if len(coords) != self.ndim or any(not 0 <= c < n for c, n in zip(coords, self.shape)):
            raise ArgumentError(f"coordinate {coords} outside grid of shape {self.shape}")
        return sum(c * s for c, s in zip(coords, self.strides))

    def unravel(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise ArgumentError(f"flat index {index} outside grid of size {self.size}")
        return tuple(int(i) for i in np.unravel_index(index, self.shape))

    def axis_values(self, axis: int | str) -> np.ndarray:
        """ 1-D coordinates of the points along one axis """
        axis = self.axis_index(axis)
        return self.origins[axis] + self.steps[axis] * np.arange(self.shape[axis], dtype=np.float64)

    def coordinates(self, axis: int | str) -> np.ndarray:
        """ Coordinate of every grid point along one axis, flattened row-major """
        axis = self.axis_index(axis)
        view = [1] * self.ndim
        view[axis] = self.shape[axis]
        values = self.axis_values(axis).reshape(view)
        return np.broadcast_to(values, self.shape).ravel()

    def mesh(self) -> list[np.ndarray]:
        """ Full coordinate arrays of every axis in grid shape """
        return np.meshgrid(*[self.axis_values(a) for a in range(self.ndim)], indexing="ij")


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64).ravel()
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DataField:
    """ One dependent variable sampled on every point of a grid """
    name: str
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.values.size != self.grid.size:
            raise ShapeError(f"field '{self.name}' has {self.values.size} values, grid needs {self.grid.size}")
        bad = np.flatnonzero(~np.isfinite(self.values))
        if bad.size:
            raise DataError(f"field '{self.name}' contains a non-finite value", index=int(bad[0]))

    def as_array(self) -> np.ndarray:
        """ Values reshaped to the grid shape """
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True, eq=False)
class Dataset:
    """ The observed datafield D: dependent variables sharing one grid """
    grid: Grid
    fields: tuple[DataField, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(self.fields) == 0:
            raise ShapeError("a dataset needs at least one field")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ShapeError(f"field names must be unique, got {names}")
        for f in self.fields:
            if f.grid != self.grid:
                raise ShapeError(f"field '{f.name}' lives on a different grid")

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def field(self, name: str) -> DataField:
        for f in self.fields:
            if f.name == name:
                return f
        raise ArgumentError(f"dataset has no variable '{name}'")

    @classmethod
    def from_arrays(cls, grid: Grid, arrays: dict[str, np.ndarray]) -> "Dataset":
        return cls(grid=grid, fields=tuple(DataField(name, grid, values) for name, values in arrays.items()))


def field_l2_norm(values) -> float:
    """
    Euclidean norm of a field over the grid points.

    Args:
        values (np.ndarray): Field values, any shape.

    Returns:
        float: sqrt of the sum of squares.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ArgumentError("cannot take the norm of an empty array")
    if not np.all(np.isfinite(values)):
        raise DataError("norm of a non-finite array", index=int(np.flatnonzero(~np.isfinite(values))[0]))
    return float(np.linalg.norm(values))


def _split_header(line: str, key: str, number: int) -> str:
    prefix = f"{key}:"
    if not line.startswith(prefix):
        raise FormatError(f"expected '{prefix} ...', got '{line}'", line=number)
    return line[len(prefix):].strip()


def _parse_names(text: str, key: str, number: int) -> tuple[str, ...]:
    names = tuple(n.strip() for n in text.split(","))
    if not names or any(not n for n in names):
        raise FormatError(f"empty name in '{key}' list", line=number)
    return names


def load_dataset(path: str | Path) -> Dataset:
    """
    Read an EPDE-GRID v1 file.

    Args:
        path (str | Path): File to read.

    Returns:
        Dataset: The fields in the order declared by the `vars` line.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetIOError(f"cannot read dataset {path}: {exc}") from exc

    # Keep physical line numbers for error messages
    lines = [(n, raw.strip()) for n, raw in enumerate(text.splitlines(), start=1)]
    lines = [(n, line) for n, line in lines if line and not line.startswith("#")]
    cursor = iter(lines)

    def next_line(what: str) -> tuple[int, str]:
        try:
            return next(cursor)
        except StopIteration:
            last = lines[-1][0] if lines else 0
            raise FormatError(f"unexpected end of file, expected {what}", line=last + 1) from None

    number, line = next_line("the magic line")
    if line != MAGIC:
        raise FormatError(f"expected '{MAGIC}', got '{line}'", line=number)

    number, line = next_line("'vars:'")
    variables = _parse_names(_split_header(line, "vars", number), "vars", number)
    number, line = next_line("'dims:'")
    dims = _parse_names(_split_header(line, "dims", number), "dims", number)

    number, line = next_line("'shape:'")
    try:
        shape = tuple(int(tok) for tok in _split_header(line, "shape", number).split())
    except ValueError:
        raise FormatError(f"shape entries must be integers: '{line}'", line=number) from None
    if len(shape) != len(dims):
        raise FormatError(f"shape has {len(shape)} entries for {len(dims)} dims", line=number)

    origins, steps = [], []
    for dim in dims:
        number, line = next_line(f"'axis {dim}:'")
        body = _split_header(line, f"axis {dim}", number).split()
        if len(body) != 2:
            raise FormatError(f"axis line needs '<origin> <step>', got '{line}'", line=number)
        try:
            origins.append(float(body[0]))
            steps.append(float(body[1]))
        except ValueError:
            raise FormatError(f"axis origin and step must be reals: '{line}'", line=number) from None

    try:
        grid = Grid(dim_names=dims, shape=shape, origins=tuple(origins), steps=tuple(steps))
    except ShapeError as exc:
        raise FormatError(str(exc), line=number) from exc

    # The remaining lines are field headers followed by values with any wrapping
    blocks: dict[str, list[str]] = {}
    current = None
    for number, line in cursor:
        if line.startswith("field:"):
            current = line[len("field:"):].strip()
            if current not in variables:
                raise FormatError(f"field '{current}' is not declared in vars", line=number)
            if current in blocks:
                raise FormatError(f"field '{current}' appears twice", line=number)
            blocks[current] = []
        elif current is None:
            raise FormatError(f"expected 'field: <name>', got '{line}'", line=number)
        else:
            blocks[current].extend(line.split())

    fields = []
    for name in variables:
        if name not in blocks:
            raise ShapeError(f"field '{name}' declared in vars but has no data block")
        tokens = blocks[name]
        if len(tokens) != grid.size:
            raise ShapeError(f"field '{name}' has {len(tokens)} values, shape {shape} needs {grid.size}")
        try:
            values = np.array([float(tok) for tok in tokens], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"field '{name}': {exc}") from None
        fields.append(DataField(name, grid, values))

    logger.debug("loaded %s: vars %s, shape %s", path, variables, shape)
    return Dataset(grid=grid, fields=tuple(fields))


def format_dataset(dataset: Dataset, comments: list[str] | None = None) -> str:
    """ EPDE-GRID v1 text of a dataset, optional comment lines first """
    grid = dataset.grid
    out = [f"# {c}" for c in comments or []]
    out.append(MAGIC)
    out.append("vars: " + ",".join(dataset.variable_names))
    out.append("dims: " + ",".join(grid.dim_names))
    out.append("shape: " + " ".join(str(n) for n in grid.shape))
    for name, origin, step in zip(grid.dim_names, grid.origins, grid.steps):
        out.append(f"axis {name}: {origin!r} {step!r}")
    for f in dataset.fields:
        bad = np.flatnonzero(~np.isfinite(f.values))
        if bad.size:
            raise DataError(f"field '{f.name}' contains a non-finite value", index=int(bad[0]))
        out.append(f"field: {f.name}")
        text = [format(v, ".17g") for v in f.values.tolist()]
        for start in range(0, len(text), VALUES_PER_LINE):
            out.append(" ".join(text[start:start + VALUES_PER_LINE]))
    return "\n".join(out) + "\n"


def save_dataset(dataset: Dataset, path: str | Path, comments: list[str] | None = None) -> None:
    """
    Write a dataset as EPDE-GRID v1 text; values use 17 significant digits so they round-trip bit-exactly.

    Args:
        dataset (Dataset): Dataset to write.
        path (str | Path): Destination file.
        comments (list[str] | None): Lines written as '#' comments before the header.
    """
    path = Path(path)
    text = format_dataset(dataset, comments)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset to {path}: {exc}") from exc
    logger.debug("wrote %s (%d fields)", path, len(dataset.fields))
