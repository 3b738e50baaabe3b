"""Interior flood depth, depth-damage losses, outcome categories, aggregation.

Flood depth inside a structure is the flood surface elevation minus the
lowest floor elevation (street elevation plus HDSL); positive values mean
water above the lowest floor. The residential depth-damage curve is piecewise
linear between control points tabulated in feet, floored at zero below -2 ft
and capped at 80.7% above 16 ft. Losses are emitted only for parcels with
strictly positive interior depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from floodline.rasters import FEET_TO_METERS

# residential (no basement) depth-damage control points: (depth_ft, damage fraction)
DDF_POINTS_FT = (
    (-2.0, 0.000),
    (-1.0, 0.025),
    (0.0, 0.134),
    (1.0, 0.233),
    (2.0, 0.321),
    (3.0, 0.401),
    (4.0, 0.471),
    (5.0, 0.532),
    (6.0, 0.586),
    (7.0, 0.637),
    (8.0, 0.672),
    (12.0, 0.772),
    (16.0, 0.807),
)

_DDF_DEPTHS = np.array([p[0] for p in DDF_POINTS_FT])
_DDF_FRACTIONS = np.array([p[1] for p in DDF_POINTS_FT])
DDF_MAX_FRACTION = float(_DDF_FRACTIONS[-1])

CATEGORIES = ("flooded", "clearance", "in_extent_no_lfe", "outside_extent")


def fdis(fathom_elev_m: float, street_elev_m: float, hdsl_m: float) -> float:
    """Flood depth inside the structure: surface elevation minus (street + HDSL)."""
    return fathom_elev_m - (street_elev_m + hdsl_m)


def ddf(fdis_m: float) -> float:
    """Damage fraction for an interior flood depth, by linear interpolation in feet."""
    if not math.isfinite(fdis_m):
        raise ValueError(f"depth must be finite, got {fdis_m}")
    depth_ft = fdis_m / FEET_TO_METERS
    if depth_ft < _DDF_DEPTHS[0]:
        return 0.0
    if depth_ft > _DDF_DEPTHS[-1]:
        return DDF_MAX_FRACTION
    return float(np.interp(depth_ft, _DDF_DEPTHS, _DDF_FRACTIONS))


def loss(market_value_usd: float, fdis_m: float) -> float:
    """Dollar loss: value times damage fraction, only for positive interior depth.

    The curve itself carries nonzero damage at small negative depths, but a
    structure whose lowest floor sits at or above the flood surface is not
    charged a loss.
    """
    if market_value_usd < 0:
        raise ValueError("market value must be non-negative")
    if fdis_m <= 0.0:
        return 0.0
    return market_value_usd * ddf(fdis_m)


def value_filter(parcels: Sequence, key=lambda p: p.assessed_value_usd):
    """Split one AOI's parcels into (kept, dropped) by the P1/P99 value screen.

    Parcels strictly below the 1st or strictly above the 99th percentile of
    assessed value within the AOI are dropped as probable data anomalies.
    """
    if not parcels:
        return [], []
    values = np.array([key(p) for p in parcels], dtype=np.float64)
    p1, p99 = np.quantile(values, [0.01, 0.99])
    kept, dropped = [], []
    for parcel, v in zip(parcels, values):
        (kept if p1 <= v <= p99 else dropped).append(parcel)
    return kept, dropped


def classify(fathom_sample: Optional[float], hdsl_m: Optional[float], fdis_m: Optional[float]) -> str:
    """Assign one of the four outcome categories."""
    if fathom_sample is None:
        return "outside_extent"
    if hdsl_m is None:
        return "in_extent_no_lfe"
    if fdis_m is not None and fdis_m > 0.0:
        return "flooded"
    return "clearance"


@dataclass
class AssessmentRecord:
    """Per-parcel flood risk outcome."""

    parcel_id: str
    aoi_id: str
    hdsl_source: str  # extracted | imputed | missing
    hdsl_m: Optional[float]
    street_elev_m: Optional[float]
    fathom_elev_m: Optional[float]
    fdis_m: Optional[float]
    damage_fraction: Optional[float]
    loss_usd: float
    category: str
    assessed_value_usd: float = 0.0
    lat: Optional[float] = None
    lon: Optional[float] = None
    fathom_sample: Optional[float] = None  # raw neighborhood-mean sample (meters)


def assess_parcel(
    parcel_id: str,
    aoi_id: str,
    assessed_value_usd: float,
    hdsl_source: str,
    hdsl_m: Optional[float],
    street_elev_m: Optional[float],
    fathom_elev_m: Optional[float],
    fathom_sample: Optional[float] = None,
    lat: Optional[float] = None,
    lon: Optional[float] = None,
) -> AssessmentRecord:
    """Compute FDIS, damage, loss, and category for one parcel."""
    fdis_m = None
    damage = None
    loss_usd = 0.0
    usable_hdsl = hdsl_m if hdsl_source in ("extracted", "imputed") else None
    if fathom_elev_m is not None and usable_hdsl is not None and street_elev_m is not None:
        fdis_m = fdis(fathom_elev_m, street_elev_m, usable_hdsl)
        damage = ddf(fdis_m) if fdis_m > 0.0 else 0.0
        loss_usd = loss(assessed_value_usd, fdis_m)
    category = classify(
        fathom_sample if fathom_sample is not None else fathom_elev_m,
        usable_hdsl if street_elev_m is not None else None,
        fdis_m,
    )
    return AssessmentRecord(
        parcel_id=parcel_id,
        aoi_id=aoi_id,
        hdsl_source=hdsl_source,
        hdsl_m=hdsl_m,
        street_elev_m=street_elev_m,
        fathom_elev_m=fathom_elev_m,
        fdis_m=fdis_m,
        damage_fraction=damage,
        loss_usd=loss_usd,
        category=category,
        assessed_value_usd=assessed_value_usd,
        lat=lat,
        lon=lon,
        fathom_sample=fathom_sample,
    )


@dataclass
class AoiSummary:
    """Per-AOI (or regional) outcome counts and loss statistics."""

    aoi_id: str
    n_parcels: int = 0
    counts: Dict[str, int] = field(default_factory=lambda: {c: 0 for c in CATEGORIES})
    total_loss_usd: float = 0.0
    median_loss_among_damaged: Optional[float] = None
    max_single_loss: Optional[float] = None
    median_fdis_flooded: Optional[float] = None
    median_clearance: Optional[float] = None
    value_at_risk_usd: float = 0.0


def _summarize(aoi_id: str, records: Sequence[AssessmentRecord]) -> AoiSummary:
    summary = AoiSummary(aoi_id=aoi_id, n_parcels=len(records))
    losses = []
    fdis_flooded = []
    clearances = []
    for rec in records:
        summary.counts[rec.category] += 1
        if rec.loss_usd > 0.0:
            losses.append(rec.loss_usd)
        summary.total_loss_usd += rec.loss_usd
        if rec.category == "flooded" and rec.fdis_m is not None:
            fdis_flooded.append(rec.fdis_m)
        if rec.category == "clearance" and rec.fdis_m is not None:
            clearances.append(-rec.fdis_m)
        sample = rec.fathom_sample if rec.fathom_sample is not None else rec.fathom_elev_m
        if sample is not None and sample > 0.0:
            summary.value_at_risk_usd += rec.assessed_value_usd
    if losses:
        summary.median_loss_among_damaged = float(np.median(losses))
        summary.max_single_loss = float(max(losses))
    if fdis_flooded:
        summary.median_fdis_flooded = float(np.median(fdis_flooded))
    if clearances:
        summary.median_clearance = float(np.median(clearances))
    return summary


def aggregate(records: Sequence[AssessmentRecord], level: str = "aoi") -> List[AoiSummary]:
    """Summaries per AOI, or one regional summary over every record."""
    if level == "regional":
        return [_summarize("REGIONAL", list(records))]
    if level != "aoi":
        raise ValueError(f"unknown aggregation level {level!r}")
    by_aoi: Dict[str, List[AssessmentRecord]] = {}
    for rec in records:
        by_aoi.setdefault(rec.aoi_id, []).append(rec)
    return [_summarize(aoi, recs) for aoi, recs in sorted(by_aoi.items())]


def _demote_imputed(rec: AssessmentRecord) -> AssessmentRecord:
    """Re-assess an imputed parcel as if its HDSL were unavailable."""
    return assess_parcel(
        rec.parcel_id,
        rec.aoi_id,
        rec.assessed_value_usd,
        "missing",
        None,
        rec.street_elev_m,
        rec.fathom_elev_m,
        rec.fathom_sample,
        rec.lat,
        rec.lon,
    )


@dataclass
class SensitivityPair:
    """Extracted-only vs extracted+imputed aggregates for one AOI or the region."""

    aoi_id: str
    extracted_only: AoiSummary
    combined: AoiSummary

    @property
    def loss_delta_usd(self) -> float:
        return self.combined.total_loss_usd - self.extracted_only.total_loss_usd


def sensitivity(records: Sequence[AssessmentRecord]) -> List[SensitivityPair]:
    """Paired summaries measuring what imputation adds, per AOI plus regional.

    The extracted-only pass treats every imputed-source parcel as lacking
    HDSL; the combined pass uses records as-is.
    """
    extracted_view = [_demote_imputed(r) if r.hdsl_source == "imputed" else r for r in records]
    pairs = []
    combined_by_aoi = {s.aoi_id: s for s in aggregate(records, "aoi")}
    for only in aggregate(extracted_view, "aoi"):
        pairs.append(SensitivityPair(only.aoi_id, only, combined_by_aoi[only.aoi_id]))
    pairs.append(
        SensitivityPair(
            "REGIONAL",
            aggregate(extracted_view, "regional")[0],
            aggregate(records, "regional")[0],
        )
    )
    return pairs
