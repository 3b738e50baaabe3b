"""File formats and deterministic serialization helpers.

Every output file is written atomically (temp file + rename) with `\n` line
endings and repr-based float formatting, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from floodline.geometry import DepthMatrix, GeoPoint, PanoramaObservation, decode_depth


class InputError(ValueError):
    """Malformed or missing input data; maps to CLI exit code 1."""


class StageError(RuntimeError):
    """A pipeline stage cannot run (e.g. missing prerequisite); exit code 2."""


def atomic_write(path, data) -> None:
    """Write text or bytes to path via a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt_cell(value) -> str:
    """Deterministic CSV cell rendering; None becomes the empty string."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_opt_float(cell: str) -> Optional[float]:
    return None if cell == "" else float(cell)


def parse_bool(cell: str) -> bool:
    return cell.strip().lower() in ("true", "1", "yes")


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_cell(v) for v in row])
    atomic_write(path, buf.getvalue())


def read_csv(path) -> List[Dict[str, str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise StageError(f"missing input file {path}") from exc


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# parcels

PARCEL_HEADER = ("parcel_id", "aoi_id", "lat", "lon", "street_name", "assessed_value_usd")


def write_parcels_csv(path, parcels) -> None:
    write_csv(
        path,
        PARCEL_HEADER,
        [
            (p.parcel_id, p.aoi_id, p.centroid.lat, p.centroid.lon, p.street_name, p.assessed_value_usd)
            for p in parcels
        ],
    )


def read_parcels_csv(path):
    from floodline.features import ParcelRecord

    parcels = []
    for i, row in enumerate(read_csv(path)):
        try:
            parcels.append(
                ParcelRecord(
                    parcel_id=row["parcel_id"],
                    aoi_id=row["aoi_id"],
                    centroid=GeoPoint(float(row["lat"]), float(row["lon"])),
                    street_name=row.get("street_name", ""),
                    assessed_value_usd=float(row["assessed_value_usd"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise InputError(f"{path}: bad parcel record on data line {i + 1}: {exc}") from exc
    return parcels


# ---------------------------------------------------------------------------
# panorama metadata (JSON lines) + masks + depth payloads


def write_mask_file(path, pixels) -> None:
    atomic_write(path, "".join(f"{x} {y}\n" for x, y in sorted(pixels)))


def read_mask_file(path) -> frozenset:
    pixels = set()
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InputError(f"{path}: line {i + 1}: expected 'x y', got {line!r}")
            try:
                pixels.add((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise InputError(f"{path}: line {i + 1}: non-integer pixel {line!r}") from exc
    return frozenset(pixels)


PANORAMA_FIELDS = (
    "parcel_id",
    "camera_lat",
    "camera_lon",
    "camera_elev_m",
    "yaw_deg",
    "width_px",
    "height_px",
    "acquired",
    "depth_file",
    "door_mask_file",
    "roadside_mask_file",
    "structure_detected",
)


def write_panorama_jsonl(path, records: Sequence[dict]) -> None:
    lines = []
    for rec in records:
        lines.append(json.dumps({k: rec[k] for k in PANORAMA_FIELDS}, sort_keys=True))
    atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def read_panorama_jsonl(path) -> List[dict]:
    records = []
    try:
        with open(path) as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InputError(f"{path}: line {i + 1}: invalid JSON: {exc}") from exc
                missing = [k for k in PANORAMA_FIELDS if k not in rec]
                if missing:
                    raise InputError(f"{path}: line {i + 1}: missing field(s) {', '.join(missing)}")
                records.append(rec)
    except FileNotFoundError as exc:
        raise InputError(f"missing panorama metadata file {path}") from exc
    return records


def load_observation(record: dict, base_dir, depth_cache: Optional[dict] = None) -> PanoramaObservation:
    """Materialize a PanoramaObservation from a metadata record.

    File paths are resolved relative to the metadata file's directory. The
    depth cache lets parcels share decoded depth payloads by path.
    """
    base = Path(base_dir)
    depth_path = str(base / record["depth_file"])
    depth: Optional[DepthMatrix] = None if depth_cache is None else depth_cache.get(depth_path)
    if depth is None:
        with open(depth_path, "rb") as fh:
            depth = decode_depth(fh.read())
        if depth_cache is not None:
            depth_cache[depth_path] = depth
    return PanoramaObservation(
        parcel_id=record["parcel_id"],
        camera=GeoPoint(float(record["camera_lat"]), float(record["camera_lon"])),
        camera_elev_m=float(record["camera_elev_m"]),
        yaw_deg=float(record["yaw_deg"]),
        width_px=int(record["width_px"]),
        height_px=int(record["height_px"]),
        acquired=datetime.date.fromisoformat(record["acquired"]),
        depth=depth,
        door_mask=read_mask_file(base / record["door_mask_file"]),
        roadside_mask=read_mask_file(base / record["roadside_mask_file"]),
        structure_detected=bool(record["structure_detected"]),
    )


# ---------------------------------------------------------------------------
# raster manifests

RASTER_LAYERS = ("hand", "d2stream_so0", "d2stream_so4", "dem", "fathom_100yr")


def read_raster_manifest(path) -> Dict[str, dict]:
    """Layer name -> {path (absolute), units, semantic}; validates layer set."""
    try:
        doc = read_json(path)
    except FileNotFoundError as exc:
        raise InputError(f"missing raster manifest {path}") from exc
    base = Path(path).parent
    layers = {}
    for name, spec in doc.get("layers", {}).items():
        layers[name] = {
            "path": str(base / spec["path"]),
            "units": spec.get("units", "meters"),
            "semantic": spec.get("semantic", "surface_elevation"),
        }
    missing = [layer for layer in RASTER_LAYERS if layer not in layers]
    if missing:
        raise InputError(f"{path}: manifest missing layer(s): {', '.join(missing)}")
    return layers


def load_rasters(manifest: Dict[str, dict]):
    from floodline.rasters import parse_ascii_grid

    grids = {}
    for name, spec in manifest.items():
        try:
            with open(spec["path"]) as fh:
                grids[name] = parse_ascii_grid(fh.read(), units=spec["units"])
        except FileNotFoundError as exc:
            raise StageError(f"missing raster layer {name!r} at {spec['path']}") from exc
    return grids


# ---------------------------------------------------------------------------
# GeoJSON


def assessment_geojson(records) -> str:
    features = []
    for rec in records:
        if rec.lat is None or rec.lon is None:
            continue
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [rec.lon, rec.lat]},
                "properties": {
                    "parcel_id": rec.parcel_id,
                    "aoi_id": rec.aoi_id,
                    "hdsl_source": rec.hdsl_source,
                    "hdsl_m": rec.hdsl_m,
                    "street_elev_m": rec.street_elev_m,
                    "fathom_elev_m": rec.fathom_elev_m,
                    "fdis_m": rec.fdis_m,
                    "damage_fraction": rec.damage_fraction,
                    "loss_usd": rec.loss_usd,
                    "category": rec.category,
                },
            }
        )
    return json.dumps({"type": "FeatureCollection", "features": features}, sort_keys=True, indent=1) + "\n"
