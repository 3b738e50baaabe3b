"""Synthetic AOI fixtures with analytically known ground truth.

The generator writes a complete, runnable input set: parcels, panorama
metadata with masks and a depth payload, raster layers, a raster manifest,
and a ground-truth table. The panorama geometry is constructed so that the
extraction pipeline recovers the generated HDSL to within float32 depth
rounding:

* the depth payload is a constant grid, shared by every parcel in the AOI;
* the roadside pixel row is fixed, so the roadside elevation equals the
  parcel's street elevation once the camera elevation is set to
  street_elev - depth*sin(pitch(roadside_row));
* the door pixel row is chosen per parcel so that depth*sin(pitch(row))
  lands the lowest-floor offset nearest the target HDSL; the achieved
  (pixel-quantized) value is what the ground-truth file records.

HDSL targets come from a preset function of the raster-sampled terrain
values, optionally plus Gaussian noise, so an imputation model sees an
exactly learnable target when the noise is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np

from floodline import rng
from floodline.dataio import (
    atomic_write,
    write_csv,
    write_json,
    write_mask_file,
    write_panorama_jsonl,
    write_parcels_csv,
)
from floodline.features import ParcelRecord
from floodline.geometry import (
    DEPTH_COLS,
    DEPTH_ROWS,
    DepthMatrix,
    GeoPoint,
    bearing,
    bearing_to_column,
    encode_depth,
    pitch_angle,
)
from floodline.rasters import FEET_TO_METERS, RasterGrid, point_sample, serialize_ascii_grid

M_PER_DEG_LAT = 111_320.0

PANO_HEIGHT = 2048
PANO_WIDTH = 2 * PANO_HEIGHT
SHARED_DEPTH_M = 6.0
ROADSIDE_PITCH_DEG = -30.0

GROUND_TRUTH_HEADER = (
    "parcel_id",
    "hdsl_true",
    "lfe_true",
    "street_elev",
    "has_imagery",
    "door_visible",
)


@dataclass
class SynthAoiParams:
    """Knobs for one synthetic AOI."""

    aoi_id: str
    n_parcels: int
    workflow: str = "tuning_extended"
    terrain: str = "coastal_ramp"  # coastal_ramp | flat | ridged
    hdsl_fn: str = "linear_elev_hand"  # linear_elev_hand | constant | noise_only
    hdsl_coeffs: tuple = (0.1, 0.05, 0.2)  # a*elevation + b*HAND + c
    noise_sigma: float = 0.0
    imagery_coverage: float = 1.0
    door_visibility: float = 1.0
    flood_offset_m: float = 0.8
    center_lat: float = 29.75
    center_lon: float = -95.40
    span_deg: float = 0.02
    cellsize_deg: float = 0.0005
    fathom_units: str = "feet"

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthAoiParams":
        kwargs = dict(doc)
        kwargs.pop("id", None)
        if "hdsl_coeffs" in kwargs:
            kwargs["hdsl_coeffs"] = tuple(kwargs["hdsl_coeffs"])
        return cls(aoi_id=doc["id"], **{k: v for k, v in kwargs.items() if k in cls.__dataclass_fields__})


@dataclass
class SynthResult:
    """Paths and truth table for a generated fixture."""

    config_path: Path
    ground_truth: dict = field(default_factory=dict)  # aoi -> parcel_id -> row dict


def _terrain_grids(p: SynthAoiParams):
    """DEM / HAND / stream-distance / flood-surface rasters over the AOI bbox."""
    half = p.span_deg / 2.0
    xll = p.center_lon - half
    yll = p.center_lat - half
    n = int(round(p.span_deg / p.cellsize_deg))
    lon = xll + (np.arange(n) + 0.5) * p.cellsize_deg
    lat_top_first = yll + (n - np.arange(n) - 0.5) * p.cellsize_deg
    lon_g, lat_g = np.meshgrid(lon, lat_top_first)

    u = (lat_g - yll) / p.span_deg
    v = (lon_g - xll) / p.span_deg
    if p.terrain == "coastal_ramp":
        dem = 4.0 + 9.0 * u + 3.0 * v + 0.9 * np.sin(6.0 * math.pi * v) * np.cos(4.0 * math.pi * u)
    elif p.terrain == "flat":
        dem = 6.0 + 0.4 * u + 0.2 * v
    elif p.terrain == "ridged":
        dem = 8.0 + 4.0 * u + 3.5 * np.sin(10.0 * math.pi * v) ** 2 + 2.0 * np.cos(7.0 * math.pi * u)
    else:
        raise ValueError(f"unknown terrain preset {p.terrain!r}")
    hand = np.maximum(0.0, 0.6 * (dem - dem.min()) + 1.2 * np.sin(5.0 * math.pi * u) ** 2)
    so0 = np.abs(v - 0.35) * p.span_deg * M_PER_DEG_LAT
    so4 = (np.abs(u - 0.8) + 0.1) * p.span_deg * M_PER_DEG_LAT
    fathom_m = dem + p.flood_offset_m
    fathom = fathom_m / FEET_TO_METERS if p.fathom_units == "feet" else fathom_m

    def grid(values, units="meters"):
        return RasterGrid(n, n, xll, yll, p.cellsize_deg, values, units=units)

    return {
        "dem": grid(dem),
        "hand": grid(hand),
        "d2stream_so0": grid(so0),
        "d2stream_so4": grid(so4),
        "fathom_100yr": grid(fathom, units=p.fathom_units),
    }


def _hdsl_target(p: SynthAoiParams, elev: float, hand: float, noise: float) -> float:
    a, b, c = p.hdsl_coeffs
    if p.hdsl_fn == "linear_elev_hand":
        base = a * elev + b * hand + c
    elif p.hdsl_fn == "constant":
        base = c
    elif p.hdsl_fn == "noise_only":
        base = c
    else:
        raise ValueError(f"unknown hdsl_fn {p.hdsl_fn!r}")
    return max(0.02, base + noise)


def _door_row_for_offset(target_offset_m: float, depth_m: float) -> int:
    """Panorama row whose pitch puts depth*sin(pitch) nearest the target."""
    ratio = min(1.0, max(-1.0, target_offset_m / depth_m))
    pitch_deg = math.degrees(math.asin(ratio))
    row = int(round(PANO_HEIGHT / 2.0 - pitch_deg * PANO_HEIGHT / 180.0))
    return min(PANO_HEIGHT - 1, max(0, row))


def generate_aoi(p: SynthAoiParams, out_dir: Path, seed: int) -> dict:
    """Write one AOI's input files; returns the ground-truth rows by parcel id."""
    out_dir = Path(out_dir)
    raster_dir = out_dir / "rasters" / p.aoi_id
    mask_dir = out_dir / "masks" / p.aoi_id
    depth_dir = out_dir / "depth" / p.aoi_id

    grids = _terrain_grids(p)
    for name, grid in grids.items():
        atomic_write(raster_dir / f"{name}.asc", serialize_ascii_grid(grid))
    write_json(
        raster_dir / "manifest.json",
        {
            "layers": {
                name: (
                    {"path": f"{name}.asc", "units": p.fathom_units, "semantic": "surface_elevation"}
                    if name == "fathom_100yr"
                    else {"path": f"{name}.asc", "units": "meters"}
                )
                for name in grids
            }
        },
    )

    # one constant depth grid serves every panorama in the AOI
    depth_value = float(np.float32(SHARED_DEPTH_M))
    depth = DepthMatrix(np.full((DEPTH_ROWS, DEPTH_COLS), SHARED_DEPTH_M))
    depth_file = depth_dir / "shared_depth.b64"
    atomic_write(depth_file, encode_depth(depth))

    roadside_row = int(round(PANO_HEIGHT / 2.0 - ROADSIDE_PITCH_DEG * PANO_HEIGHT / 180.0))
    roadside_offset = depth_value * math.sin(math.radians(pitch_angle(roadside_row, PANO_HEIGHT)))

    gen = rng.stream(seed, "synth", p.aoi_id)
    half = p.span_deg / 2.0
    margin = 2.5 * p.cellsize_deg  # keep the 3x3 neighborhood inside the raster
    parcels: List[ParcelRecord] = []
    pano_records: List[dict] = []
    truth = {}

    for i in range(p.n_parcels):
        pid = f"{p.aoi_id}-{i:05d}"
        lat = p.center_lat + gen.uniform(-half + margin, half - margin)
        lon = p.center_lon + gen.uniform(-half + margin, half - margin)
        street = f"Street {int(gen.integers(0, max(2, p.n_parcels // 25)))}"
        value = float(np.round(gen.lognormal(12.2, 0.35), 2))
        parcels.append(
            ParcelRecord(pid, p.aoi_id, GeoPoint(lat, lon), street_name=street, assessed_value_usd=value)
        )

        elev = point_sample(grids["dem"], lon, lat).value
        hand = point_sample(grids["hand"], lon, lat).value
        noise = float(gen.normal(0.0, p.noise_sigma)) if p.noise_sigma > 0 else 0.0
        hdsl_target = _hdsl_target(p, elev, hand, noise)
        street_elev = elev

        has_imagery = bool(gen.uniform() < p.imagery_coverage)
        door_visible = bool(has_imagery and gen.uniform() < p.door_visibility)

        if has_imagery:
            camera = GeoPoint(lat - 20.0 / M_PER_DEG_LAT, lon)
            camera_elev = street_elev - roadside_offset
            door_row = _door_row_for_offset(hdsl_target + roadside_offset, depth_value)
            door_offset = depth_value * math.sin(math.radians(pitch_angle(door_row, PANO_HEIGHT)))
            achieved_hdsl = door_offset - roadside_offset
            achieved_lfe = camera_elev + door_offset

            beta = bearing(camera, GeoPoint(lat, lon))
            yaw = beta - 90.0
            col = bearing_to_column(beta, yaw, PANO_WIDTH)
            door_mask = [(col - 1, door_row), (col, door_row), (col + 1, door_row)]
            road_mask = [(col - 1, roadside_row), (col, roadside_row), (col + 1, roadside_row)]
            door_path = mask_dir / f"{pid}_door.txt"
            road_path = mask_dir / f"{pid}_road.txt"
            write_mask_file(door_path, door_mask if door_visible else [])
            write_mask_file(road_path, road_mask)
            pano_records.append(
                {
                    "parcel_id": pid,
                    "camera_lat": camera.lat,
                    "camera_lon": camera.lon,
                    "camera_elev_m": camera_elev,
                    "yaw_deg": yaw,
                    "width_px": PANO_WIDTH,
                    "height_px": PANO_HEIGHT,
                    "acquired": "2020-06-01",
                    "depth_file": str(depth_file.relative_to(out_dir)),
                    "door_mask_file": str(door_path.relative_to(out_dir)),
                    "roadside_mask_file": str(road_path.relative_to(out_dir)),
                    "structure_detected": True,
                }
            )
            hdsl_true = achieved_hdsl if door_visible else hdsl_target
            lfe_true = achieved_lfe if door_visible else street_elev + hdsl_target
        else:
            hdsl_true = hdsl_target
            lfe_true = street_elev + hdsl_target

        truth[pid] = {
            "parcel_id": pid,
            "hdsl_true": hdsl_true,
            "lfe_true": lfe_true,
            "street_elev": street_elev,
            "has_imagery": has_imagery,
            "door_visible": door_visible,
        }

    write_parcels_csv(out_dir / f"parcels_{p.aoi_id}.csv", parcels)
    write_panorama_jsonl(out_dir / f"panoramas_{p.aoi_id}.jsonl", pano_records)
    write_csv(
        out_dir / f"ground_truth_{p.aoi_id}.csv",
        GROUND_TRUTH_HEADER,
        [[truth[pid][k] for k in GROUND_TRUTH_HEADER] for pid in sorted(truth)],
    )
    return truth


def generate_fixture(
    out_dir,
    aois: List[SynthAoiParams],
    seed: int,
    gate_threshold: float = 0.15,
    tie_window: float = 0.01,
    n_iter: int = 30,
    k_folds: int = 5,
    workers: int = 1,
) -> SynthResult:
    """Generate a multi-AOI fixture plus a ready-to-run pipeline config."""
    out_dir = Path(out_dir)
    result = SynthResult(config_path=out_dir / "config.json")
    for p in aois:
        result.ground_truth[p.aoi_id] = generate_aoi(p, out_dir, seed)
    write_json(
        result.config_path,
        {
            "seed": seed,
            "output_dir": "out",
            "gate_threshold": gate_threshold,
            "tie_window": tie_window,
            "n_iter": n_iter,
            "k_folds": k_folds,
            "workers": workers,
            "aois": [
                {
                    "id": p.aoi_id,
                    "workflow": p.workflow,
                    "raster_manifest": f"rasters/{p.aoi_id}/manifest.json",
                    "parcels": f"parcels_{p.aoi_id}.csv",
                    "panoramas": f"panoramas_{p.aoi_id}.jsonl",
                }
                for p in aois
            ],
        },
    )
    return result


def generate_from_document(doc: dict, out_dir) -> SynthResult:
    """Generate a fixture from a synth-parameters JSON document."""
    aois = [SynthAoiParams.from_dict(entry) for entry in doc["aois"]]
    return generate_fixture(
        out_dir,
        aois,
        seed=int(doc["seed"]),
        gate_threshold=float(doc.get("gate_threshold", 0.15)),
        tie_window=float(doc.get("tie_window", 0.01)),
        n_iter=int(doc.get("n_iter", 30)),
        k_folds=int(doc.get("k_folds", 5)),
        workers=int(doc.get("workers", 1)),
    )
