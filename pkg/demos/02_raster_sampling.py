"""Raster ingestion and sampling: point values vs the six-nearest-pixel mean.

Parses a small hand-written ASCII grid, samples it at a parcel centroid, and
shows how nodata cells and the 3x3 neighborhood rule interact.
"""

from floodline.rasters import neighborhood_mean, parse_ascii_grid, point_sample, to_meters

doc = """\
ncols 5
nrows 5
xllcorner 0
yllcorner 0
cellsize 1
nodata_value -9999
1.0 1.2 1.4   1.6 1.8
1.1 1.3 1.5   1.7 1.9
1.2 1.4 -9999 1.8 2.0
1.3 1.5 1.7   1.9 2.1
1.4 1.6 1.8   2.0 2.2
"""

grid = parse_ascii_grid(doc)
print(f"parsed {grid.nrows}x{grid.ncols} grid, cellsize {grid.cellsize}, nodata {grid.nodata}")

x, y = 2.5, 2.5  # center of the grid, which happens to be the nodata cell
print(f"\npoint sample at ({x}, {y}): {point_sample(grid, x, y)}")
print(f"neighborhood mean at ({x}, {y}): {neighborhood_mean(grid, x, y)}")
print("(the nodata center is skipped; the six nearest valid neighbors average in)")

print(f"\noutside the extent: {point_sample(grid, -3.0, 2.0)}")

corner = neighborhood_mean(grid, 0.5, 4.5)
print(f"at the top-left corner only {corner.valid_pixel_count} cells exist: mean {corner.value:.3f}")

# flood-surface rasters often arrive in feet
feet_value = 5.2
print(f"\n{feet_value} ft -> {to_meters(feet_value, 'feet'):.4f} m (exact x0.3048)")
