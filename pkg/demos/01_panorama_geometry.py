"""Walk through the panorama geometry: bearing, pixel window, pitch, LFE.

Builds a tiny synthetic panorama observation by hand and shows each step of
the elevation derivation, ending with the street-to-floor height (HDSL).
"""

import datetime

import numpy as np

from floodline.geometry import (
    DEPTH_COLS,
    DEPTH_ROWS,
    DepthMatrix,
    GeoPoint,
    PanoramaObservation,
    bearing,
    bearing_to_column,
    estimate_lfe,
    pitch_angle,
    screen,
    segmentation_window,
    vertical_offset,
)

camera = GeoPoint(29.7500, -95.4000)
house = GeoPoint(29.7503, -95.3998)  # ~35 m to the north-east

beta = bearing(camera, house)
print(f"camera -> house bearing: {beta:.3f} deg clockwise from north")

width, height = 2048, 1024
yaw = beta - 90.0  # aim the panorama so the house sits a quarter-turn in
center_col = bearing_to_column(beta, yaw, width)
window = segmentation_window(center_col, width)
print(f"house appears at column {center_col}; +/-45 deg window holds {len(window)} columns")

# door bottom 140 px below the horizon, roadside further down
door_row = height // 2 + 140
road_row = height // 2 + 230
print(f"pitch at door row {door_row}: {pitch_angle(door_row, height):+.2f} deg")
print(f"pitch at road row {road_row}: {pitch_angle(road_row, height):+.2f} deg")

# a constant 6 m depth map keeps the arithmetic easy to follow
depth = DepthMatrix(np.full((DEPTH_ROWS, DEPTH_COLS), 6.0))
camera_elev = 13.0
obs = PanoramaObservation(
    parcel_id="demo-parcel",
    camera=camera,
    camera_elev_m=camera_elev,
    yaw_deg=yaw,
    width_px=width,
    height_px=height,
    acquired=datetime.date(2021, 4, 1),
    depth=depth,
    door_mask=frozenset({(center_col - 1, door_row), (center_col, door_row), (center_col + 1, door_row)}),
    roadside_mask=frozenset({(center_col, road_row)}),
)

result = estimate_lfe(obs, house)
print(f"\nLFE  = CE + depth*sin(pitch) = {camera_elev} + {vertical_offset(6.0, pitch_angle(door_row, height)):+.3f}"
      f" = {result.lfe_m:.3f} m")
print(f"RE   = {result.roadside_elev_m:.3f} m (same construction on the roadside mask)")
print(f"HDSL = LFE - RE = {result.hdsl_m:.3f} m")

status = screen(obs, house, dem_elev_m=result.lfe_m - 0.4, lfe_m=result.lfe_m, roadside_elev_m=result.roadside_elev_m)
print(f"quality screen: {status.value}")

stale = PanoramaObservation(**{**obs.__dict__, "acquired": datetime.date(2013, 5, 1)})
print(f"same panorama dated 2013: {screen(stale, house, result.lfe_m, result.lfe_m, result.roadside_elev_m).value}")
