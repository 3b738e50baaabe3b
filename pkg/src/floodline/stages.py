"""File-based pipeline stages: extract, impute, assess, report.

Stages communicate only through files under the run's output directory, so
each stage can be rerun in isolation and a crash between stages loses nothing
already written. Within a stage, AOIs are independent work items; with
workers > 1 they run in a process pool, and because every AOI uses its own
derived RNG stream and the parent merges results in config order, output
bytes do not depend on the worker count.
"""

from __future__ import annotations

import logging
import math
import time
import multiprocessing
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from floodline import rng
from floodline.config import AoiConfig, RunConfig, config_hash
from floodline.dataio import (
    StageError,
    atomic_write,
    assessment_geojson,
    load_observation,
    load_rasters,
    read_csv,
    read_json,
    read_panorama_jsonl,
    read_parcels_csv,
    read_raster_manifest,
    sha256_file,
    write_csv,
    write_json,
)
from floodline.ensemble import clean_targets, model_to_document
from floodline.evaluation import WorkflowParams, run_workflow
from floodline.features import (
    FEATURE_COLUMNS,
    FeatureTable,
    StreetEncoder,
    build_features,
    parcel_bbox,
)
from floodline.geometry import ScreenStatus, estimate_lfe, screen
from floodline.rasters import neighborhood_mean, point_sample, to_meters
from floodline.risk import AssessmentRecord, aggregate, assess_parcel, sensitivity, value_filter

log = logging.getLogger(__name__)


def _pool_context():
    """fork where available (fast, works from any __main__), else default."""
    try:
        return multiprocessing.get_context("fork")
    except ValueError:  # pragma: no cover - non-POSIX platforms
        return multiprocessing.get_context()


ESTIMATE_HEADER = ("parcel_id", "lfe_m", "roadside_elev_m", "hdsl_m", "door_visible", "screen_status")
COVERAGE_HEADER = (
    "aoi_id",
    "total",
    "with_imagery",
    "with_imagery_pct",
    "with_door",
    "with_door_pct",
    "with_hdsl",
    "with_hdsl_pct",
)
HDSL_HEADER = ("parcel_id", "hdsl_m", "hdsl_source")
REPORT_HEADER = (
    "aoi_id",
    "workflow",
    "model",
    "outlier_config",
    "n_train",
    "rmse_m",
    "rmse_pct",
    "r2",
    "r2_cv",
    "gap",
    "gate_passed",
    "n_imputed",
    "n_clamped",
    "mean_extracted_hdsl",
    "mean_imputed_hdsl",
)
DROP_HEADER = ("parcel_id", "aoi_id", "stage", "reason")
ASSESSMENT_HEADER = (
    "parcel_id",
    "aoi_id",
    "hdsl_source",
    "hdsl_m",
    "street_elev_m",
    "fathom_elev_m",
    "fdis_m",
    "damage_fraction",
    "loss_usd",
    "category",
)
SUMMARY_HEADER = (
    "aoi_id",
    "n_parcels",
    "n_flooded",
    "n_clearance",
    "n_in_extent_no_lfe",
    "n_outside_extent",
    "total_loss_usd",
    "median_loss_usd",
    "max_loss_usd",
    "median_fdis_m",
    "median_clearance_m",
    "value_at_risk_usd",
)
SENSITIVITY_HEADER = (
    "aoi_id",
    "total_loss_extracted_only",
    "total_loss_combined",
    "loss_delta_usd",
    "flooded_extracted_only",
    "flooded_combined",
    "in_extent_no_lfe_extracted_only",
    "in_extent_no_lfe_combined",
)


class StagePaths:
    def __init__(self, config: RunConfig):
        out = Path(config.output_dir)
        self.out = out
        self.extract = out / "extract"
        self.impute = out / "impute"
        self.assess = out / "assess"
        self.report = out / "report"
        self.manifest = out / "run_manifest.json"

    def estimates(self, aoi_id: str) -> Path:
        return self.extract / f"estimates_{aoi_id}.csv"

    def coverage(self) -> Path:
        return self.extract / "coverage.csv"

    def extract_drop_log(self) -> Path:
        return self.extract / "drop_log.csv"

    def features(self, aoi_id: str) -> Path:
        return self.impute / f"features_{aoi_id}.csv"

    def model(self, aoi_id: str) -> Path:
        return self.impute / f"model_{aoi_id}.json"

    def hdsl(self, aoi_id: str) -> Path:
        return self.impute / f"hdsl_{aoi_id}.csv"

    def model_reports(self) -> Path:
        return self.impute / "model_reports.csv"

    def impute_drop_log(self) -> Path:
        return self.impute / "drop_log.csv"

    def assessment(self) -> Path:
        return self.assess / "assessment.csv"

    def summary(self) -> Path:
        return self.assess / "summary.csv"

    def sensitivity(self) -> Path:
        return self.assess / "sensitivity.csv"

    def geojson(self) -> Path:
        return self.assess / "assessment.geojson"

    def assess_drop_log(self) -> Path:
        return self.assess / "drop_log.csv"

    def report_txt(self) -> Path:
        return self.report / "report.txt"


def _config_from_dict(doc: dict) -> RunConfig:
    return RunConfig(
        seed=doc["seed"],
        output_dir=doc["output_dir"],
        gate_threshold=doc["gate_threshold"],
        tie_window=doc["tie_window"],
        n_iter=doc["n_iter"],
        k_folds=doc["k_folds"],
        workers=doc["workers"],
        aois=[
            AoiConfig(a["id"], a["workflow"], a["raster_manifest"], a["parcels"], a["panoramas"])
            for a in doc["aois"]
        ],
    )


def _run_per_aoi(config: RunConfig, worker, aoi_ids: List[str]):
    """Run a per-AOI worker serially or in a pool; results in config order.

    With a single AOI the process budget is handed down instead (the impute
    worker spends it on search cells), so pools never nest.
    """
    if config.workers > 1 and len(aoi_ids) > 1:
        args = [(config.to_dict(), aoi_id, 1) for aoi_id in aoi_ids]
        with _pool_context().Pool(min(config.workers, len(args))) as pool:
            return pool.map(worker, args)
    args = [(config.to_dict(), aoi_id, config.workers) for aoi_id in aoi_ids]
    return [worker(a) for a in args]


def _pct(part: int, total: int) -> float:
    return 0.0 if total == 0 else 100.0 * part / total


# ---------------------------------------------------------------------------
# extract


def _extract_aoi(args) -> Tuple[List[list], list]:
    config = _config_from_dict(args[0])
    aoi = config.aoi(args[1])
    paths = StagePaths(config)

    parcels = read_parcels_csv(aoi.parcels)
    manifest = read_raster_manifest(aoi.raster_manifest)
    try:
        dem = load_rasters({"dem": manifest["dem"]})["dem"]
    except StageError as exc:
        raise StageError(f"AOI {aoi.aoi_id}: {exc}") from exc
    pano_records = {}
    for rec in read_panorama_jsonl(aoi.panoramas):
        pano_records.setdefault(rec["parcel_id"], rec)
    pano_base = Path(aoi.panoramas).parent

    rows = []
    drops: List[list] = []
    depth_cache: Dict[str, object] = {}
    n_imagery = n_door = n_hdsl = 0
    for parcel in parcels:
        rec = pano_records.get(parcel.parcel_id)
        if rec is None:
            continue
        n_imagery += 1
        # parcel-level failures are recorded, never fatal for the stage
        try:
            obs = load_observation(rec, pano_base, depth_cache)
        except (OSError, ValueError) as exc:
            log.warning("AOI %s parcel %s: unusable panorama: %s", aoi.aoi_id, parcel.parcel_id, exc)
            drops.append([parcel.parcel_id, aoi.aoi_id, "extract", f"panorama_error: {exc}"])
            continue
        est = estimate_lfe(obs, parcel.centroid)
        dem_sample = point_sample(dem, parcel.centroid.lon, parcel.centroid.lat)
        dem_elev = to_meters(dem_sample.value, dem.units) if dem_sample.value is not None else math.inf
        status = screen(obs, parcel.centroid, dem_elev, est.lfe_m, est.roadside_elev_m)
        if est.door_visible:
            n_door += 1
        if status is ScreenStatus.ACCEPTED:
            n_hdsl += 1
        rows.append(
            [
                parcel.parcel_id,
                est.lfe_m,
                est.roadside_elev_m,
                est.hdsl_m,
                est.door_visible,
                status.value,
            ]
        )

    write_csv(paths.estimates(aoi.aoi_id), ESTIMATE_HEADER, rows)
    total = len(parcels)
    coverage = [
        aoi.aoi_id,
        total,
        n_imagery,
        round(_pct(n_imagery, total), 1),
        n_door,
        round(_pct(n_door, total), 1),
        n_hdsl,
        round(_pct(n_hdsl, total), 1),
    ]
    return rows, coverage, drops


def run_extract(config: RunConfig, aoi_ids: Optional[List[str]] = None) -> List[list]:
    """Stage 1: derive elevation estimates and the coverage report."""
    paths = StagePaths(config)
    ids = aoi_ids or [a.aoi_id for a in config.aois]
    started = time.time()
    results = _run_per_aoi(config, _extract_aoi, ids)
    coverage_rows = [cov for _, cov, _ in results]
    drop_rows = [d for _, _, drops in results for d in drops]
    write_csv(paths.coverage(), COVERAGE_HEADER, coverage_rows)
    write_csv(paths.extract_drop_log(), DROP_HEADER, drop_rows)
    _update_manifest(
        config,
        "extract",
        inputs=[p for a in config.aois for p in (a.parcels, a.panoramas, a.raster_manifest)],
        outputs=[paths.coverage(), paths.extract_drop_log()] + [paths.estimates(aoi_id) for aoi_id in ids],
        elapsed=time.time() - started,
        statuses={aoi_id: "ok" for aoi_id in ids},
    )
    return coverage_rows


# ---------------------------------------------------------------------------
# impute


def _sample_layers(parcel, grids, manifest) -> Dict[str, Optional[float]]:
    """Raster samples in meters for one parcel; fathom uses the 3x3 rule."""
    lon, lat = parcel.centroid.lon, parcel.centroid.lat
    samples: Dict[str, Optional[float]] = {}
    for layer in ("hand", "d2stream_so0", "d2stream_so4", "dem"):
        res = point_sample(grids[layer], lon, lat)
        samples[layer] = None if res.value is None else to_meters(res.value, grids[layer].units)
    fathom_res = neighborhood_mean(grids["fathom_100yr"], lon, lat)
    if fathom_res.value is None:
        samples["fathom"] = None
        samples["fathom_raw"] = None
    else:
        raw = to_meters(fathom_res.value, grids["fathom_100yr"].units)
        samples["fathom_raw"] = raw
        if manifest["fathom_100yr"]["semantic"] == "depth_above_ground":
            samples["fathom"] = None if samples["dem"] is None else raw + samples["dem"]
        else:
            samples["fathom"] = raw
    return samples


def _read_estimates(path) -> Dict[str, dict]:
    out = {}
    for row in read_csv(path):
        out[row["parcel_id"]] = {
            "lfe_m": None if row["lfe_m"] == "" else float(row["lfe_m"]),
            "roadside_elev_m": None if row["roadside_elev_m"] == "" else float(row["roadside_elev_m"]),
            "hdsl_m": None if row["hdsl_m"] == "" else float(row["hdsl_m"]),
            "door_visible": row["door_visible"] == "true",
            "screen_status": row["screen_status"],
        }
    return out


def _impute_aoi(args):
    config = _config_from_dict(args[0])
    aoi = config.aoi(args[1])
    paths = StagePaths(config)
    if not paths.estimates(aoi.aoi_id).exists():
        raise StageError(f"AOI {aoi.aoi_id}: extract output missing; run the extract stage first")

    parcels = read_parcels_csv(aoi.parcels)
    estimates = _read_estimates(paths.estimates(aoi.aoi_id))
    manifest = read_raster_manifest(aoi.raster_manifest)
    try:
        grids = load_rasters(manifest)
    except StageError as exc:
        raise StageError(f"AOI {aoi.aoi_id}: {exc}") from exc

    drops: List[list] = []
    extracted: Dict[str, float] = {}
    for parcel in parcels:
        est = estimates.get(parcel.parcel_id)
        if est and est["screen_status"] == ScreenStatus.ACCEPTED.value and est["hdsl_m"] is not None:
            extracted[parcel.parcel_id] = est["hdsl_m"]

    # target cleaning: demote physically unusable extracted values to missing
    ids = list(extracted)
    keep = clean_targets(np.array([extracted[i] for i in ids])) if ids else np.zeros(0, bool)
    for pid, ok in zip(ids, keep):
        if not ok:
            drops.append([pid, aoi.aoi_id, "impute", "target_cleaning"])
            del extracted[pid]

    encoder = StreetEncoder([p.street_name for p in parcels if p.parcel_id in extracted])
    bbox = parcel_bbox(parcels) if parcels else (0.0, 0.0, 0.0, 0.0)

    feature_rows: List[tuple] = []  # (parcel_id, row, hdsl or None)
    train = FeatureTable([], np.empty((0, len(FEATURE_COLUMNS))), np.empty(0))
    predict = FeatureTable([], np.empty((0, len(FEATURE_COLUMNS))))
    train_rows, train_y, train_ids = [], [], []
    pred_rows, pred_ids = [], []
    for parcel in parcels:
        est = estimates.get(parcel.parcel_id)
        door_visible = bool(est and est["door_visible"])
        samples = _sample_layers(parcel, grids, manifest)
        row = build_features(parcel, samples, encoder, bbox, door_visible)
        if row is None:
            drops.append([parcel.parcel_id, aoi.aoi_id, "impute", "incomplete_features"])
            continue
        hdsl = extracted.get(parcel.parcel_id)
        feature_rows.append((parcel.parcel_id, row, hdsl))
        if hdsl is not None:
            train_rows.append(row)
            train_y.append(hdsl)
            train_ids.append(parcel.parcel_id)
        else:
            pred_rows.append(row)
            pred_ids.append(parcel.parcel_id)

    if train_rows:
        train = FeatureTable(train_ids, np.vstack(train_rows), np.array(train_y))
    if pred_rows:
        predict = FeatureTable(pred_ids, np.vstack(pred_rows))

    write_csv(
        paths.features(aoi.aoi_id),
        ("parcel_id",) + FEATURE_COLUMNS + ("hdsl_m",),
        [[pid, *row.tolist(), hdsl] for pid, row, hdsl in feature_rows],
    )

    result = run_workflow(
        train.X,
        train.y if train.y is not None else np.empty(0),
        predict.X,
        predict.parcel_ids,
        mode=aoi.workflow,
        rng_seed=rng.child_seed(config.seed, "aoi", aoi.aoi_id),
        aoi_id=aoi.aoi_id,
        params=WorkflowParams(
            config.gate_threshold, config.tie_window, config.n_iter, config.k_folds, workers=args[2]
        ),
    )

    merged_rows = []
    for parcel in parcels:
        if parcel.parcel_id in extracted:
            merged_rows.append([parcel.parcel_id, extracted[parcel.parcel_id], "extracted"])
        elif parcel.parcel_id in result.predictions:
            merged_rows.append([parcel.parcel_id, result.predictions[parcel.parcel_id], "imputed"])
        else:
            merged_rows.append([parcel.parcel_id, None, "missing"])
    write_csv(paths.hdsl(aoi.aoi_id), HDSL_HEADER, merged_rows)

    mean_extracted = float(np.mean(list(extracted.values()))) if extracted else None
    mean_imputed = float(np.mean(list(result.predictions.values()))) if result.predictions else None
    if mean_extracted is not None and mean_imputed is not None:
        log.info(
            "AOI %s imputed-vs-extracted mean HDSL delta: %.4f m",
            aoi.aoi_id,
            abs(mean_imputed - mean_extracted),
        )

    if result.model is not None:
        report_doc = {
            "aoi_id": result.report.aoi_id,
            "workflow": result.report.workflow,
            "n_train": result.report.n_train,
            "rmse_m": result.report.rmse_m,
            "rmse_pct": result.report.rmse_pct,
            "r2": result.report.r2,
            "r2_cv": result.report.r2_cv,
            "gap": result.report.gap,
            "gate_passed": result.report.gate_passed,
        }
        atomic_write(paths.model(aoi.aoi_id), model_to_document(result.model, report_doc))

    report_row = [
        aoi.aoi_id,
        result.report.workflow,
        result.report.algo,
        result.report.outlier_config,
        result.report.n_train,
        result.report.rmse_m,
        result.report.rmse_pct,
        result.report.r2,
        result.report.r2_cv,
        result.report.gap,
        result.report.gate_passed,
        len(result.predictions),
        result.report.n_clamped,
        mean_extracted,
        mean_imputed,
    ]
    return report_row, drops


def run_impute(config: RunConfig, aoi_ids: Optional[List[str]] = None) -> List[list]:
    """Stage 2: train/gate per AOI and merge imputed with extracted HDSL."""
    paths = StagePaths(config)
    ids = aoi_ids or [a.aoi_id for a in config.aois]
    started = time.time()
    results = _run_per_aoi(config, _impute_aoi, ids)
    report_rows = [rep for rep, _ in results]
    drop_rows = [d for _, drops in results for d in drops]
    write_csv(paths.model_reports(), REPORT_HEADER, report_rows)
    write_csv(paths.impute_drop_log(), DROP_HEADER, drop_rows)
    outputs = [paths.model_reports(), paths.impute_drop_log()]
    for aoi_id in ids:
        outputs.extend([paths.features(aoi_id), paths.hdsl(aoi_id)])
        if paths.model(aoi_id).exists():
            outputs.append(paths.model(aoi_id))
    _update_manifest(
        config,
        "impute",
        inputs=[paths.estimates(aoi_id) for aoi_id in ids],
        outputs=outputs,
        elapsed=time.time() - started,
        statuses={row[0]: ("ok" if row[10] else "gated_out") for row in report_rows},
    )
    return report_rows


# ---------------------------------------------------------------------------
# assess


def _assess_aoi(args):
    config = _config_from_dict(args[0])
    aoi = config.aoi(args[1])
    paths = StagePaths(config)
    if not paths.hdsl(aoi.aoi_id).exists():
        raise StageError(f"AOI {aoi.aoi_id}: impute output missing; run the impute stage first")

    parcels = read_parcels_csv(aoi.parcels)
    estimates = _read_estimates(paths.estimates(aoi.aoi_id)) if paths.estimates(aoi.aoi_id).exists() else {}
    manifest = read_raster_manifest(aoi.raster_manifest)
    try:
        grids = load_rasters(manifest)
    except StageError as exc:
        raise StageError(f"AOI {aoi.aoi_id}: {exc}") from exc
    merged = {row["parcel_id"]: row for row in read_csv(paths.hdsl(aoi.aoi_id))}

    kept, dropped = value_filter(parcels)
    drops = [[p.parcel_id, aoi.aoi_id, "assess", "value_filter"] for p in dropped]

    records: List[AssessmentRecord] = []
    for parcel in kept:
        m = merged.get(parcel.parcel_id, {"hdsl_m": "", "hdsl_source": "missing"})
        hdsl = None if m["hdsl_m"] == "" else float(m["hdsl_m"])
        source = m["hdsl_source"]
        samples = _sample_layers(parcel, grids, manifest)
        est = estimates.get(parcel.parcel_id)
        if est and est["screen_status"] == ScreenStatus.ACCEPTED.value and est["roadside_elev_m"] is not None:
            street_elev = est["roadside_elev_m"]
        else:
            street_elev = samples["dem"]
        records.append(
            assess_parcel(
                parcel.parcel_id,
                aoi.aoi_id,
                parcel.assessed_value_usd,
                source,
                hdsl,
                street_elev,
                samples["fathom"],
                fathom_sample=samples["fathom_raw"],
                lat=parcel.centroid.lat,
                lon=parcel.centroid.lon,
            )
        )
    return records, drops


def _summary_row(s) -> list:
    return [
        s.aoi_id,
        s.n_parcels,
        s.counts["flooded"],
        s.counts["clearance"],
        s.counts["in_extent_no_lfe"],
        s.counts["outside_extent"],
        s.total_loss_usd,
        s.median_loss_among_damaged,
        s.max_single_loss,
        s.median_fdis_flooded,
        s.median_clearance,
        s.value_at_risk_usd,
    ]


def run_assess(config: RunConfig, aoi_ids: Optional[List[str]] = None) -> List[AssessmentRecord]:
    """Stage 3: FDIS, damage, loss, categories, summaries, sensitivity."""
    paths = StagePaths(config)
    ids = aoi_ids or [a.aoi_id for a in config.aois]
    started = time.time()
    results = _run_per_aoi(config, _assess_aoi, ids)
    records = [rec for recs, _ in results for rec in recs]
    drop_rows = [d for _, drops in results for d in drops]

    write_csv(
        paths.assessment(),
        ASSESSMENT_HEADER,
        [
            [
                r.parcel_id,
                r.aoi_id,
                r.hdsl_source,
                r.hdsl_m,
                r.street_elev_m,
                r.fathom_elev_m,
                r.fdis_m,
                r.damage_fraction,
                r.loss_usd,
                r.category,
            ]
            for r in records
        ],
    )

    summaries = aggregate(records, "aoi") + aggregate(records, "regional")
    for s in summaries:
        if sum(s.counts.values()) != s.n_parcels:
            raise StageError(f"AOI {s.aoi_id}: category counts do not partition the parcel total")
    write_csv(paths.summary(), SUMMARY_HEADER, [_summary_row(s) for s in summaries])

    pairs = sensitivity(records)
    write_csv(
        paths.sensitivity(),
        SENSITIVITY_HEADER,
        [
            [
                pair.aoi_id,
                pair.extracted_only.total_loss_usd,
                pair.combined.total_loss_usd,
                pair.loss_delta_usd,
                pair.extracted_only.counts["flooded"],
                pair.combined.counts["flooded"],
                pair.extracted_only.counts["in_extent_no_lfe"],
                pair.combined.counts["in_extent_no_lfe"],
            ]
            for pair in pairs
        ],
    )

    atomic_write(paths.geojson(), assessment_geojson(records))
    write_csv(paths.assess_drop_log(), DROP_HEADER, drop_rows)
    _update_manifest(
        config,
        "assess",
        inputs=[paths.hdsl(aoi_id) for aoi_id in ids],
        outputs=[paths.assessment(), paths.summary(), paths.sensitivity(), paths.geojson(), paths.assess_drop_log()],
        elapsed=time.time() - started,
        statuses={aoi_id: "ok" for aoi_id in ids},
    )
    return records


# ---------------------------------------------------------------------------
# report


def _fmt_num(cell: str, digits: int = 3) -> str:
    if cell in ("", None):
        return "-"
    try:
        return f"{float(cell):.{digits}f}"
    except ValueError:
        return str(cell)


def _aligned(rows: List[List[str]]) -> List[str]:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]


def run_report(config: RunConfig) -> str:
    """Stage 4: human-readable run report from the stage exports."""
    paths = StagePaths(config)
    for required in (paths.coverage(), paths.model_reports(), paths.summary()):
        if not required.exists():
            raise StageError(f"report prerequisite missing: {required}")

    lines: List[str] = []
    lines.append("EXTRACTION COVERAGE")
    cov_rows = [["AOI", "TOTAL", "W/IMAGERY", "W/DOOR", "W/LFE-HDSL"]]
    for row in read_csv(paths.coverage()):
        cov_rows.append(
            [
                row["aoi_id"],
                row["total"],
                f"{row['with_imagery']} ({_fmt_num(row['with_imagery_pct'], 1)}%)",
                f"{row['with_door']} ({_fmt_num(row['with_door_pct'], 1)}%)",
                f"{row['with_hdsl']} ({_fmt_num(row['with_hdsl_pct'], 1)}%)",
            ]
        )
    lines.extend(_aligned(cov_rows))

    lines.append("")
    lines.append("IMPUTATION MODELS")
    model_rows = [["AOI", "WORKFLOW", "MODEL", "OUTLIER", "N", "RMSE(M)", "RMSE%", "R2", "R2_CV", "GAP", "STATUS"]]
    for row in read_csv(paths.model_reports()):
        gated_in = row["gate_passed"] == "true"
        model_rows.append(
            [
                row["aoi_id"],
                row["workflow"],
                row["model"] or "-",
                row["outlier_config"] or "-",
                row["n_train"],
                _fmt_num(row["rmse_m"]),
                _fmt_num(row["rmse_pct"], 1),
                _fmt_num(row["r2"]),
                _fmt_num(row["r2_cv"]),
                _fmt_num(row["gap"]),
                "ok" if gated_in else "EXCLUDED",
            ]
        )
    lines.extend(_aligned(model_rows))

    lines.append("")
    lines.append("FLOOD RISK SUMMARY")
    risk_rows = [
        ["AOI", "PARCELS", "FLOODED", "CLEARANCE", "NO-LFE", "OUTSIDE", "TOTAL LOSS", "MEDIAN LOSS", "VALUE AT RISK"]
    ]
    for row in read_csv(paths.summary()):
        risk_rows.append(
            [
                row["aoi_id"],
                row["n_parcels"],
                row["n_flooded"],
                row["n_clearance"],
                row["n_in_extent_no_lfe"],
                row["n_outside_extent"],
                f"${_fmt_num(row['total_loss_usd'], 2)}",
                ("-" if row["median_loss_usd"] == "" else f"${_fmt_num(row['median_loss_usd'], 2)}"),
                f"${_fmt_num(row['value_at_risk_usd'], 2)}",
            ]
        )
    lines.extend(_aligned(risk_rows))
    lines.append("")

    text = "\n".join(lines)
    atomic_write(paths.report_txt(), text)
    _update_manifest(
        config,
        "report",
        inputs=[paths.coverage(), paths.model_reports(), paths.summary()],
        outputs=[paths.report_txt()],
        elapsed=0.0,
        statuses={},
    )
    return text


# ---------------------------------------------------------------------------
# run manifest


def _update_manifest(config: RunConfig, stage: str, inputs, outputs, elapsed: float, statuses: dict) -> None:
    paths = StagePaths(config)
    doc = {}
    if paths.manifest.exists():
        doc = read_json(paths.manifest)
    doc["config_hash"] = config_hash(config)
    stages = doc.setdefault("stages", {})
    stages[stage] = {
        "inputs": {str(p): sha256_file(p) for p in inputs if Path(p).exists()},
        "outputs": {str(p): sha256_file(p) for p in outputs if Path(p).exists()},
        "elapsed_s": round(elapsed, 3),
        "aoi_statuses": statuses,
    }
    write_json(paths.manifest, doc)
