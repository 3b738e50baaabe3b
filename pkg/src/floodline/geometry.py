"""Equirectangular panorama geometry and lowest-floor-elevation extraction.

A street-view panorama is a 2:1 equirectangular image: column maps linearly to
azimuth, row to elevation angle. Given the camera pose, the segmented
door-bottom and roadside pixels, and the paired depth matrix, the lowest floor
elevation (LFE) is the camera elevation plus the depth-weighted vertical
offset to the door bottom, and HDSL is LFE minus the roadside elevation.

All angles are handled in radians internally; public interfaces use degrees.
"""

from __future__ import annotations

import base64
import datetime
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

DEPTH_ROWS = 256
DEPTH_COLS = 512
DEPTH_PAYLOAD_BYTES = DEPTH_ROWS * DEPTH_COLS * 4

# panoramas acquired before this date are rejected by the quality screen
MIN_ACQUISITION_DATE = datetime.date(2015, 1, 1)
MAX_CAMERA_DISTANCE_M = 50.0
MAX_DEM_DEVIATION_M = 5.0


class DepthFormatError(ValueError):
    """Raised when a depth payload cannot be decoded."""


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 location in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of [-180, 180]")


class DepthMatrix:
    """256x512 grid of depths in meters; missing cells are NaN.

    Non-finite or non-positive input values are treated as missing.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (DEPTH_ROWS, DEPTH_COLS):
            raise ValueError(f"depth matrix must be {DEPTH_ROWS}x{DEPTH_COLS}, got {values.shape}")
        cleaned = values.copy()
        cleaned[~np.isfinite(cleaned) | (cleaned <= 0.0)] = np.nan
        cleaned.flags.writeable = False
        self.values = cleaned

    def at(self, row: int, col: int) -> Optional[float]:
        """Depth at a matrix cell, or None when missing."""
        v = self.values[row, col]
        return None if math.isnan(v) else float(v)


class ScreenStatus(str, Enum):
    ACCEPTED = "accepted"
    REJECTED_DATE = "rejected_date"
    REJECTED_DISTANCE = "rejected_distance"
    REJECTED_NO_STRUCTURE = "rejected_no_structure"
    REJECTED_NO_DOOR = "rejected_no_door"
    REJECTED_IMPLAUSIBLE = "rejected_implausible"


@dataclass
class PanoramaObservation:
    """Camera pose, masks, and depth for one parcel's primary panorama."""

    parcel_id: str
    camera: GeoPoint
    camera_elev_m: float
    yaw_deg: float
    width_px: int
    height_px: int
    acquired: datetime.date
    depth: DepthMatrix
    door_mask: frozenset = frozenset()
    roadside_mask: frozenset = frozenset()
    structure_detected: bool = True

    def __post_init__(self):
        if self.width_px != 2 * self.height_px:
            raise ValueError(
                f"equirectangular panorama requires width = 2 x height, got {self.width_px}x{self.height_px}"
            )
        if not math.isfinite(self.camera_elev_m):
            raise ValueError("camera_elev_m must be finite")
        for name, mask in (("door_mask", self.door_mask), ("roadside_mask", self.roadside_mask)):
            for x, y in mask:
                if not (0 <= x < self.width_px and 0 <= y < self.height_px):
                    raise ValueError(f"{name} pixel ({x}, {y}) outside {self.width_px}x{self.height_px}")


@dataclass
class ElevationEstimate:
    """Per-parcel extraction outcome; elevations present only when derivable."""

    parcel_id: str
    lfe_m: Optional[float]
    roadside_elev_m: Optional[float]
    hdsl_m: Optional[float]
    door_visible: bool
    screen_status: ScreenStatus


def bearing(camera: GeoPoint, house: GeoPoint) -> float:
    """Initial bearing from camera to house, degrees clockwise from north in [0, 360)."""
    lat_c = math.radians(camera.lat)
    lat_h = math.radians(house.lat)
    dlon = math.radians(house.lon - camera.lon)
    x = math.sin(dlon) * math.cos(lat_h)
    y = math.cos(lat_c) * math.sin(lat_h) - math.sin(lat_c) * math.cos(lat_h) * math.cos(dlon)
    return math.degrees(math.atan2(x, y)) % 360.0


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters (mean Earth radius 6,371,000 m)."""
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    s = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))


def bearing_to_column(bearing_deg: float, yaw_deg: float, width_px: int) -> int:
    """Panorama column whose viewing azimuth equals the given bearing."""
    if width_px <= 0:
        raise ValueError("width_px must be positive")
    frac = ((bearing_deg - yaw_deg) % 360.0) / 360.0
    return int(round(frac * width_px)) % width_px


def segmentation_window(center_col: int, width_px: int) -> frozenset:
    """Columns within the +/-45 deg half-open window around center, wrapping the seam.

    The window is [center - width/8, center + width/8) modulo width, which is
    exactly width/4 columns.
    """
    if width_px <= 0:
        raise ValueError("width_px must be positive")
    half = width_px // 8
    return frozenset((center_col + off) % width_px for off in range(-half, half))


def door_bottom_pixels(mask, window) -> frozenset:
    """Lowest masked pixel (maximum row) per column, restricted to the window."""
    lowest = {}
    for x, y in mask:
        if x in window and (x not in lowest or y > lowest[x]):
            lowest[x] = y
    return frozenset(lowest.items())


def pitch_angle(p_y: int, height_px: int) -> float:
    """Pitch in degrees to a pixel row; positive above the horizon row."""
    if not 0 <= p_y < height_px:
        raise ValueError(f"row {p_y} outside [0, {height_px})")
    return (height_px / 2.0 - p_y) / height_px * 180.0


def vertical_offset(depth_m: float, pitch_deg: float) -> float:
    """Vertical height difference for a ray of given depth and pitch."""
    if depth_m <= 0:
        raise ValueError(f"depth must be positive, got {depth_m}")
    return depth_m * math.sin(math.radians(pitch_deg))


def depth_cell(x: int, y: int, width_px: int, height_px: int) -> tuple:
    """Depth-matrix cell for a full-resolution panorama pixel.

    Proportional nearest-cell mapping: (floor(y/H*256), floor(x/W*512)).
    """
    return (y * DEPTH_ROWS) // height_px, (x * DEPTH_COLS) // width_px


@dataclass
class LfeResult:
    """Outcome of the LFE/RE derivation for one panorama."""

    lfe_m: Optional[float] = None
    roadside_elev_m: Optional[float] = None
    door_visible: bool = False
    reason: str = ""
    door_pixel_count: int = 0
    usable_door_pixels: int = 0

    @property
    def hdsl_m(self) -> Optional[float]:
        if self.lfe_m is None or self.roadside_elev_m is None:
            return None
        return self.lfe_m - self.roadside_elev_m


def _mask_elevation(obs: PanoramaObservation, mask, window):
    """Median of camera elevation + vertical offset over the mask's lowest pixels.

    Pixels whose depth cell is missing are skipped. Returns
    (elevation or None, pixels found, pixels with usable depth).
    """
    pixels = door_bottom_pixels(mask, window)
    values = []
    for x, y in sorted(pixels):
        row, col = depth_cell(x, y, obs.width_px, obs.height_px)
        d = obs.depth.at(row, col)
        if d is None:
            continue
        values.append(obs.camera_elev_m + vertical_offset(d, pitch_angle(y, obs.height_px)))
    if not values:
        return None, len(pixels), 0
    return float(np.median(values)), len(pixels), len(values)


def estimate_lfe(obs: PanoramaObservation, house: GeoPoint) -> LfeResult:
    """Derive LFE and roadside elevation from one panorama.

    Pipeline: bearing -> +/-45 deg column window -> lowest door pixels ->
    per-pixel camera elevation + depth*sin(pitch) -> median. The roadside
    elevation uses the identical procedure on the roadside mask.
    """
    center = bearing_to_column(bearing(obs.camera, house), obs.yaw_deg, obs.width_px)
    window = segmentation_window(center, obs.width_px)

    lfe, n_door, n_usable = _mask_elevation(obs, obs.door_mask, window)
    result = LfeResult(door_visible=n_door > 0, door_pixel_count=n_door, usable_door_pixels=n_usable)
    if n_door == 0:
        result.reason = "no door pixels in window"
        return result
    if lfe is None:
        result.reason = "door pixels have no usable depth"
        return result
    result.lfe_m = lfe

    re_m, n_road, _ = _mask_elevation(obs, obs.roadside_mask, window)
    if re_m is None:
        result.reason = "no roadside pixels in window" if n_road == 0 else "roadside pixels have no usable depth"
        return result
    result.roadside_elev_m = re_m
    return result


def screen(
    obs: PanoramaObservation,
    parcel_centroid: GeoPoint,
    dem_elev_m: float,
    lfe_m: Optional[float] = None,
    roadside_elev_m: Optional[float] = None,
) -> ScreenStatus:
    """Three-tier quality screen for one panorama.

    Tier 1 rejects stale panoramas (before 2015-01-01), cameras more than 50 m
    from the parcel centroid, and frames with no detectable structure. Tier 2
    rejects panoramas whose door evidence yields no usable elevation (no door
    pixels in the window, or no derivable LFE/roadside elevation). Tier 3
    rejects LFE estimates deviating more than 5 m from the DEM terrain
    elevation at the centroid.
    """
    if obs.acquired < MIN_ACQUISITION_DATE:
        return ScreenStatus.REJECTED_DATE
    if haversine_m(obs.camera, parcel_centroid) > MAX_CAMERA_DISTANCE_M:
        return ScreenStatus.REJECTED_DISTANCE
    if not obs.structure_detected:
        return ScreenStatus.REJECTED_NO_STRUCTURE
    if lfe_m is None or roadside_elev_m is None:
        return ScreenStatus.REJECTED_NO_DOOR
    if abs(lfe_m - dem_elev_m) > MAX_DEM_DEVIATION_M:
        return ScreenStatus.REJECTED_IMPLAUSIBLE
    return ScreenStatus.ACCEPTED


_BASE64_INVALID = re.compile(rb"[^A-Za-z0-9+/=\s]")


def decode_depth(encoded) -> DepthMatrix:
    """Decode a base64 depth payload: row-major little-endian float32, 256x512."""
    if isinstance(encoded, str):
        encoded = encoded.encode("ascii", errors="replace")
    bad = _BASE64_INVALID.search(encoded)
    if bad:
        raise DepthFormatError(f"invalid base64 character at byte offset {bad.start()}")
    try:
        raw = base64.b64decode(encoded, validate=False)
    except Exception as exc:
        raise DepthFormatError(f"undecodable base64 payload: {exc}") from exc
    if len(raw) != DEPTH_PAYLOAD_BYTES:
        raise DepthFormatError(
            f"depth payload ends at byte offset {len(raw)}, expected {DEPTH_PAYLOAD_BYTES} bytes"
        )
    grid = np.frombuffer(raw, dtype="<f4").reshape(DEPTH_ROWS, DEPTH_COLS)
    return DepthMatrix(grid.astype(np.float64))


def encode_depth(matrix: DepthMatrix) -> bytes:
    """Inverse of decode_depth; missing cells are written as NaN."""
    return base64.b64encode(matrix.values.astype("<f4").tobytes())
