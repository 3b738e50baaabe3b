"""Run configuration: one JSON document drives all pipeline stages."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from floodline.dataio import InputError, read_json

WORKFLOW_MODES = ("batch_standard", "tuning_extended")


@dataclass
class AoiConfig:
    aoi_id: str
    workflow: str
    raster_manifest: str
    parcels: str
    panoramas: str

    def __post_init__(self):
        if self.workflow not in WORKFLOW_MODES:
            raise InputError(f"AOI {self.aoi_id}: unknown workflow {self.workflow!r}")


@dataclass
class RunConfig:
    seed: int
    output_dir: str
    aois: List[AoiConfig]
    gate_threshold: float = 0.15
    tie_window: float = 0.01
    n_iter: int = 30
    k_folds: int = 5
    workers: int = 1

    def aoi(self, aoi_id: str) -> AoiConfig:
        for a in self.aois:
            if a.aoi_id == aoi_id:
                return a
        raise InputError(f"unknown AOI id {aoi_id!r}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "gate_threshold": self.gate_threshold,
            "tie_window": self.tie_window,
            "n_iter": self.n_iter,
            "k_folds": self.k_folds,
            "workers": self.workers,
            "aois": [
                {
                    "id": a.aoi_id,
                    "workflow": a.workflow,
                    "raster_manifest": a.raster_manifest,
                    "parcels": a.parcels,
                    "panoramas": a.panoramas,
                }
                for a in self.aois
            ],
        }


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path, seed_override: Optional[int] = None, workers_override: Optional[int] = None) -> RunConfig:
    """Load and validate a run configuration.

    The seed must come from the document or the CLI; there is no wall-clock
    fallback. Relative paths are resolved against the config file's directory.
    """
    try:
        doc = read_json(path)
    except FileNotFoundError as exc:
        raise InputError(f"missing config file {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc

    base = Path(path).parent

    def resolve(p: str) -> str:
        return str((base / p) if not Path(p).is_absolute() else Path(p))

    seed = seed_override if seed_override is not None else doc.get("seed")
    if seed is None:
        raise InputError(f"{path}: a seed is required (config 'seed' or --seed)")

    aois = []
    seen_paths = set()
    for i, entry in enumerate(doc.get("aois", [])):
        try:
            aoi = AoiConfig(
                aoi_id=str(entry["id"]),
                workflow=entry.get("workflow", "tuning_extended"),
                raster_manifest=resolve(entry["raster_manifest"]),
                parcels=resolve(entry["parcels"]),
                panoramas=resolve(entry["panoramas"]),
            )
        except KeyError as exc:
            raise InputError(f"{path}: AOI entry {i}: missing key {exc}") from exc
        key = (aoi.raster_manifest, aoi.parcels, aoi.panoramas)
        if key in seen_paths:
            raise InputError(f"{path}: AOI {aoi.aoi_id}: duplicate input paths")
        seen_paths.add(key)
        aois.append(aoi)
    if not aois:
        raise InputError(f"{path}: no AOIs configured")
    if len({a.aoi_id for a in aois}) != len(aois):
        raise InputError(f"{path}: duplicate AOI ids")

    return RunConfig(
        seed=int(seed),
        output_dir=resolve(doc.get("output_dir", "out")),
        aois=aois,
        gate_threshold=float(doc.get("gate_threshold", 0.15)),
        tie_window=float(doc.get("tie_window", 0.01)),
        n_iter=int(doc.get("n_iter", 30)),
        k_folds=int(doc.get("k_folds", 5)),
        workers=int(workers_override if workers_override is not None else doc.get("workers", 1)),
    )
