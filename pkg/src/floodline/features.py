"""Predictor-vector assembly for the HDSL imputation model.

Each parcel gets one row of spatial, hydrologic, terrain, and flood-exposure
predictors plus engineered interaction terms. Training rows carry an observed
HDSL target; prediction rows do not. Rows with any missing raster sample are
flagged incomplete and excluded from both training and prediction.

Note on water_depth: the flood-exposure depth is defined here as the Fathom
surface elevation minus the terrain elevation, for training and prediction
rows alike. Defining it against HDSL would make the feature circular for the
very rows being imputed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import numpy as np

from floodline.geometry import GeoPoint

# fixed column order; the feature-matrix export and all models use exactly this
FEATURE_COLUMNS = (
    "latitude",
    "longitude",
    "street_name_encoded",
    "door_visible",
    "HAND_m",
    "D2stream_so0_m",
    "D2stream_so4_m",
    "elevation",
    "mean_fathom_meter",
    "water_depth",
    "HAND_stream_ratio",
    "HAND_stream_product",
    "elevation_squared",
    "elevation_HAND_diff",
    "water_depth_combined",
    "water_depth_max",
    "geo_cluster",
)

N_FEATURES = len(FEATURE_COLUMNS)

# raster layers that must sample successfully for a row to be complete
REQUIRED_LAYERS = ("hand", "d2stream_so0", "d2stream_so4", "dem", "fathom")


@dataclass
class ParcelRecord:
    """One residential parcel."""

    parcel_id: str
    aoi_id: str
    centroid: GeoPoint
    street_name: str = ""
    assessed_value_usd: float = 0.0
    hdsl_m: Optional[float] = None
    hdsl_source: str = "missing"  # extracted | imputed | missing

    def __post_init__(self):
        if self.assessed_value_usd < 0:
            raise ValueError(f"assessed value must be non-negative, got {self.assessed_value_usd}")
        if self.hdsl_source == "extracted" and self.hdsl_m is None:
            raise ValueError("hdsl_source=extracted requires hdsl_m")


class StreetEncoder:
    """Deterministic label encoding of street names.

    Unique names (case-folded, whitespace-trimmed) from the training parcels
    are sorted lexicographically and assigned 0..k-1; empty or unseen names
    map to the reserved code k.
    """

    def __init__(self, names):
        cleaned = sorted({n.strip().casefold() for n in names if n and n.strip()})
        self.mapping: Dict[str, int] = {name: i for i, name in enumerate(cleaned)}
        self.reserved_code = len(self.mapping)

    def encode(self, name: str) -> int:
        if not name:
            return self.reserved_code
        return self.mapping.get(name.strip().casefold(), self.reserved_code)


def encode_streets(names) -> Dict[str, int]:
    """Mapping from normalized street name to code (see StreetEncoder)."""
    return StreetEncoder(names).mapping


def geo_cluster(p: GeoPoint, bbox) -> int:
    """5x5 spatial grid cell index inside the AOI bounding box.

    bbox is (lat_min, lat_max, lon_min, lon_max); a degenerate axis collapses
    to bin 0. The top edge clamps into bin 4.
    """
    lat_min, lat_max, lon_min, lon_max = bbox

    def axis_bin(v, lo, hi):
        if hi <= lo:
            return 0
        return min(4, int(math.floor((v - lo) / (hi - lo) * 5)))

    return axis_bin(p.lat, lat_min, lat_max) * 5 + axis_bin(p.lon, lon_min, lon_max)


def parcel_bbox(parcels) -> tuple:
    """Bounding box (lat_min, lat_max, lon_min, lon_max) of parcel centroids."""
    lats = [p.centroid.lat for p in parcels]
    lons = [p.centroid.lon for p in parcels]
    return min(lats), max(lats), min(lons), max(lons)


def build_features(
    parcel: ParcelRecord,
    samples: Mapping[str, Optional[float]],
    encoder: StreetEncoder,
    bbox,
    door_visible: bool = False,
) -> Optional[np.ndarray]:
    """Assemble one feature row, or None when any required sample is missing.

    `samples` maps layer name to its sampled value in meters (None = missing):
    hand, d2stream_so0, d2stream_so4, dem (point samples) and fathom (the
    six-nearest-pixel neighborhood mean of the flood surface elevation).
    """
    for layer in REQUIRED_LAYERS:
        if samples.get(layer) is None:
            return None
    hand = samples["hand"]
    so0 = samples["d2stream_so0"]
    so4 = samples["d2stream_so4"]
    elevation = samples["dem"]
    fathom = samples["fathom"]

    water_depth = fathom - elevation
    row = np.array(
        [
            parcel.centroid.lat,
            parcel.centroid.lon,
            float(encoder.encode(parcel.street_name)),
            1.0 if door_visible else 0.0,
            hand,
            so0,
            so4,
            elevation,
            fathom,
            water_depth,
            hand / (so0 + 1.0),
            hand * so0,
            elevation * elevation,
            elevation - hand,
            fathom + water_depth,
            max(fathom, water_depth),
            float(geo_cluster(parcel.centroid, bbox)),
        ],
        dtype=np.float64,
    )
    if not np.all(np.isfinite(row)):
        return None
    return row


@dataclass
class FeatureTable:
    """A block of assembled feature rows with aligned parcel ids and targets."""

    parcel_ids: List[str]
    X: np.ndarray  # (n, N_FEATURES)
    y: Optional[np.ndarray] = None  # observed HDSL for training rows

    def __len__(self):
        return len(self.parcel_ids)

    @classmethod
    def empty(cls, with_target: bool = False):
        return cls([], np.empty((0, N_FEATURES)), np.empty(0) if with_target else None)


def recompute_derived(row: np.ndarray) -> np.ndarray:
    """Recompute the six derived entries from the base entries of a row.

    Used by verification tests: derived features must be reproducible
    bit-exactly from their inputs.
    """
    hand, so0 = row[4], row[5]
    elevation, fathom, water_depth = row[7], row[8], row[9]
    out = row.copy()
    out[10] = hand / (so0 + 1.0)
    out[11] = hand * so0
    out[12] = elevation * elevation
    out[13] = elevation - hand
    out[14] = fathom + water_depth
    out[15] = max(fathom, water_depth)
    return out
