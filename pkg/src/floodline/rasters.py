"""ASCII-grid rasters and parcel-centroid sampling.

The carrier format is the ESRI ASCII grid: a short header (ncols, nrows,
xllcorner, yllcorner, cellsize, optional nodata_value) followed by nrows x
ncols whitespace-separated numbers, first data row northernmost. Terrain,
hydrology, and flood-surface layers all ship in this format, one file per
layer per AOI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

FEET_TO_METERS = 0.3048
DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


class RasterParseError(ValueError):
    """Raised for malformed grid documents; message carries a line number."""


@dataclass(frozen=True)
class SampleResult:
    """A sampled value (or None) plus how many valid pixels contributed."""

    value: Optional[float]
    valid_pixel_count: int


class RasterGrid:
    """Immutable grid with lower-left origin; nodata cells are masked."""

    def __init__(self, ncols, nrows, xll, yll, cellsize, values, nodata=DEFAULT_NODATA, units="meters"):
        if ncols <= 0 or nrows <= 0:
            raise ValueError("grid dimensions must be positive")
        if cellsize <= 0:
            raise ValueError("cellsize must be positive")
        if units not in ("meters", "feet"):
            raise ValueError(f"unknown units {units!r}")
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (nrows, ncols):
            raise ValueError(f"value grid shape {values.shape} does not match header {nrows}x{ncols}")
        self.ncols = int(ncols)
        self.nrows = int(nrows)
        self.xll = float(xll)
        self.yll = float(yll)
        self.cellsize = float(cellsize)
        self.nodata = float(nodata)
        self.units = units
        grid = values.copy()
        grid.flags.writeable = False
        self.values = grid

    def is_valid(self, row: int, col: int) -> bool:
        if not (0 <= row < self.nrows and 0 <= col < self.ncols):
            return False
        v = self.values[row, col]
        return math.isfinite(v) and v != self.nodata

    def cell_of(self, x: float, y: float):
        """Grid (row, col) containing the point, or None outside the extent.

        Cells are half-open: a point on a shared boundary belongs to the cell
        to its east/north. Points on the top or right edge of the extent fall
        in the outermost cell.
        """
        col_f = (x - self.xll) / self.cellsize
        row_from_bottom = (y - self.yll) / self.cellsize
        if col_f < 0 or row_from_bottom < 0 or col_f > self.ncols or row_from_bottom > self.nrows:
            return None
        # flooring pushes boundary points into the east/north cell
        col = min(int(math.floor(col_f)), self.ncols - 1)
        rb = min(int(math.floor(row_from_bottom)), self.nrows - 1)
        row = self.nrows - 1 - rb
        return row, col

    def cell_center(self, row: int, col: int):
        x = self.xll + (col + 0.5) * self.cellsize
        y = self.yll + (self.nrows - row - 0.5) * self.cellsize
        return x, y


def parse_ascii_grid(text: str, units: str = "meters") -> RasterGrid:
    """Parse an ASCII grid document; raises RasterParseError with a line number."""
    header = {}
    lines = text.splitlines()
    idx = 0
    nodata = DEFAULT_NODATA
    while idx < len(lines):
        stripped = lines[idx].strip()
        if not stripped:
            idx += 1
            continue
        parts = stripped.split()
        key = parts[0].lower()
        if key in _HEADER_KEYS or key == "nodata_value":
            if len(parts) != 2:
                raise RasterParseError(f"line {idx + 1}: header '{key}' needs exactly one value")
            try:
                num = float(parts[1])
            except ValueError:
                raise RasterParseError(f"line {idx + 1}: non-numeric header value {parts[1]!r}") from None
            if key == "nodata_value":
                nodata = num
            else:
                header[key] = num
            idx += 1
        else:
            break

    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise RasterParseError(f"line {idx + 1}: missing header key(s) {', '.join(missing)}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols <= 0 or nrows <= 0:
        raise RasterParseError(f"line {idx + 1}: grid dimensions must be positive")

    expected = nrows * ncols
    data = np.empty(expected, dtype=np.float64)
    count = 0
    for line_no in range(idx, len(lines)):
        for token in lines[line_no].split():
            if count >= expected:
                raise RasterParseError(f"line {line_no + 1}: more than {expected} data values")
            try:
                data[count] = float(token)
            except ValueError:
                raise RasterParseError(f"line {line_no + 1}: non-numeric token {token!r}") from None
            count += 1
    if count != expected:
        raise RasterParseError(f"line {len(lines)}: expected {expected} data values, found {count}")

    return RasterGrid(
        ncols=ncols,
        nrows=nrows,
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cellsize=header["cellsize"],
        values=data.reshape(nrows, ncols),
        nodata=nodata,
        units=units,
    )


def serialize_ascii_grid(grid: RasterGrid) -> str:
    """Render a grid back to ASCII text; parse(serialize(g)) is the identity."""
    out = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.xll!r}",
        f"yllcorner {grid.yll!r}",
        f"cellsize {grid.cellsize!r}",
        f"nodata_value {grid.nodata!r}",
    ]
    for row in grid.values:
        out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def point_sample(grid: RasterGrid, x: float, y: float) -> SampleResult:
    """Value of the cell containing (x, y); missing outside the extent or on nodata."""
    cell = grid.cell_of(x, y)
    if cell is None or not grid.is_valid(*cell):
        return SampleResult(None, 0)
    return SampleResult(float(grid.values[cell]), 1)


def neighborhood_mean(grid: RasterGrid, x: float, y: float) -> SampleResult:
    """Mean of up to the six nearest valid cells in the 3x3 block around (x, y).

    Valid cells are ordered by Euclidean distance from the point to each cell
    center, ties broken by (row, col) ascending; the mean uses the first
    min(6, count) cells. Missing when no valid cell exists.
    """
    cell = grid.cell_of(x, y)
    if cell is None:
        return SampleResult(None, 0)
    row0, col0 = cell
    candidates = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            r, c = row0 + dr, col0 + dc
            if grid.is_valid(r, c):
                cx, cy = grid.cell_center(r, c)
                candidates.append(((cx - x) ** 2 + (cy - y) ** 2, r, c))
    if not candidates:
        return SampleResult(None, 0)
    candidates.sort()
    chosen = candidates[: min(6, len(candidates))]
    mean = float(np.mean([grid.values[r, c] for _, r, c in chosen]))
    return SampleResult(mean, len(chosen))


def to_meters(value: float, units: str) -> float:
    """Convert a raster value to meters (feet scale by exactly 0.3048)."""
    if units == "meters":
        return value
    if units == "feet":
        return value * FEET_TO_METERS
    raise ValueError(f"unknown units {units!r}")
