"""Robust scaling, outlier handling, and the RF / GB tree ensembles.

Random Forest averages T independent trees, each grown on a size-n bootstrap
sample with per-split random feature subsets. Gradient Boosting starts from
the training-target mean and adds M trees sequentially, each fit to the
current residuals and scaled by the learning rate.

All quantile computations here (and everywhere else in the package) use
linear interpolation between order statistics, numpy's default method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from floodline import rng
from floodline.trees import (
    RegressionTree,
    fit_tree,
    presort_features,
    tree_from_node_list,
    tree_to_node_list,
)

HDSL_CLEAN_MAX_M = 1000.0

# the six outlier-handling configurations evaluated by the tuning workflow
OUTLIER_CONFIGS = (
    "none",
    "percentile_clip_1_99",
    "iqr_filter:2.0",
    "iqr_filter:2.5",
    "iqr_filter:3.0",
    "iqr_filter:4.0",
)


@dataclass(frozen=True)
class OutlierConfig:
    kind: str  # none | percentile_clip_1_99 | iqr_filter
    iqr_multiplier: Optional[float] = None

    def __post_init__(self):
        if self.kind == "iqr_filter":
            if self.iqr_multiplier not in (2.0, 2.5, 3.0, 4.0):
                raise ValueError(f"iqr multiplier must be one of 2.0/2.5/3.0/4.0, got {self.iqr_multiplier}")
        elif self.kind in ("none", "percentile_clip_1_99"):
            if self.iqr_multiplier is not None:
                raise ValueError(f"{self.kind} takes no multiplier")
        else:
            raise ValueError(f"unknown outlier kind {self.kind!r}")

    @classmethod
    def parse(cls, label: str) -> "OutlierConfig":
        if label.startswith("iqr_filter:"):
            return cls("iqr_filter", float(label.split(":", 1)[1]))
        return cls(label)

    @property
    def label(self) -> str:
        if self.kind == "iqr_filter":
            return f"iqr_filter:{self.iqr_multiplier}"
        return self.kind


class InapplicableConfig(ValueError):
    """Raised when an outlier config cannot be applied (e.g. quartiles undefined)."""


def clean_targets(y: np.ndarray) -> np.ndarray:
    """Mask of training rows whose HDSL target is physically usable.

    Values above 1,000 m, negative values, and non-finite entries are
    extraction artifacts; such rows are demoted to missing.
    """
    y = np.asarray(y, dtype=np.float64)
    return np.isfinite(y) & (y >= 0.0) & (y <= HDSL_CLEAN_MAX_M)


def apply_outliers(X: np.ndarray, y: np.ndarray, cfg: OutlierConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Apply one outlier strategy to a training set; returns (X, y).

    none: unchanged. percentile_clip_1_99: targets winsorized to [P1, P99]
    (row count unchanged). iqr_filter(k): rows with target outside
    [Q1 - k*IQR, Q3 + k*IQR] removed; needs at least 4 rows.
    """
    y = np.asarray(y, dtype=np.float64)
    if cfg.kind == "none":
        return X, y
    if cfg.kind == "percentile_clip_1_99":
        lo, hi = np.quantile(y, [0.01, 0.99])
        return X, np.clip(y, lo, hi)
    if len(y) < 4:
        raise InapplicableConfig(f"iqr_filter needs >= 4 rows, got {len(y)}")
    q1, q3 = np.quantile(y, [0.25, 0.75])
    iqr = q3 - q1
    k = cfg.iqr_multiplier
    keep = (y >= q1 - k * iqr) & (y <= q3 + k * iqr)
    return X[keep], y[keep]


class RobustScaler:
    """Per-feature (x - median) / IQR; zero-IQR features center only."""

    def __init__(self, median: np.ndarray, iqr: np.ndarray):
        self.median = np.asarray(median, dtype=np.float64)
        iqr = np.asarray(iqr, dtype=np.float64)
        self.iqr = iqr
        self.divisor = np.where(iqr > 0.0, iqr, 1.0)

    @classmethod
    def fit(cls, X: np.ndarray) -> "RobustScaler":
        if len(X) < 1:
            raise ValueError("scaler needs at least one row")
        q1, med, q3 = np.quantile(X, [0.25, 0.5, 0.75], axis=0)
        return cls(med, q3 - q1)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.median) / self.divisor

    def inverse_transform(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) * self.divisor + self.median


@dataclass
class EnsembleModel:
    """A trained RF or GB regressor plus its preprocessing state."""

    algo: str  # random_forest | gradient_boost
    trees: List[RegressionTree]
    scaler: RobustScaler
    outlier_config: OutlierConfig
    hyperparams: dict
    feature_importances: np.ndarray
    rng_seed: int
    learning_rate: Optional[float] = None  # GB only
    base_prediction: Optional[float] = None  # GB only: training-target mean
    degenerate_importance: bool = False
    clamp_max: Optional[float] = None  # imputation clamp bound, set by the workflow
    extra: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Predict HDSL for raw (unscaled) feature rows."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Xs = np.ascontiguousarray(self.scaler.transform(X))
        if self.algo == "random_forest":
            acc = np.zeros(len(Xs))
            for tree in self.trees:
                acc += tree.predict(Xs)
            return acc / len(self.trees)
        acc = np.full(len(Xs), self.base_prediction, dtype=np.float64)
        for tree in self.trees:
            acc += self.learning_rate * tree.predict(Xs)
        return acc

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """(n_trees, n_rows) matrix of per-tree predictions on scaled inputs."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Xs = np.ascontiguousarray(self.scaler.transform(X))
        return np.vstack([tree.predict(Xs) for tree in self.trees])


def _normalize_importance(raw: np.ndarray) -> Tuple[np.ndarray, bool]:
    total = raw.sum()
    if total <= 0.0:
        return np.zeros_like(raw), True
    return raw / total, False


def fit_rf(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    feature_subset_size: Optional[int] = None,
    rng_seed: int = 0,
    outlier_config: OutlierConfig = OutlierConfig("none"),
    scaler: Optional[RobustScaler] = None,
) -> EnsembleModel:
    """Fit a Random Forest on raw feature rows (scaling handled internally)."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if scaler is None:
        scaler = RobustScaler.fit(X)
    Xs = np.ascontiguousarray(scaler.transform(X))
    presort = presort_features(Xs)
    trees: List[RegressionTree] = []
    importance = np.zeros(X.shape[1])
    for t in range(n_trees):
        gen = rng.stream(rng_seed, "tree", t)
        boot = gen.integers(0, n, size=n)
        counts = np.bincount(boot, minlength=n).astype(np.int64)
        fit = fit_tree(
            Xs,
            y,
            max_depth=max_depth,
            min_samples_leaf=min_samples_leaf,
            feature_subset_size=feature_subset_size,
            seed=int(rng.kernel_seed(gen)),
            presort=presort,
            counts=counts,
        )
        trees.append(fit.tree)
        importance += fit.importance
    norm, degenerate = _normalize_importance(importance)
    return EnsembleModel(
        algo="random_forest",
        trees=trees,
        scaler=scaler,
        outlier_config=outlier_config,
        hyperparams={
            "n_trees": n_trees,
            "max_depth": max_depth,
            "min_samples_leaf": min_samples_leaf,
            "feature_subset_size": feature_subset_size,
        },
        feature_importances=norm,
        rng_seed=rng_seed,
        degenerate_importance=degenerate,
    )


def fit_gb(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    learning_rate: float,
    max_depth: Optional[int] = 3,
    min_samples_leaf: int = 1,
    rng_seed: int = 0,
    outlier_config: OutlierConfig = OutlierConfig("none"),
    scaler: Optional[RobustScaler] = None,
) -> EnsembleModel:
    """Fit a Gradient Boosting ensemble on raw feature rows."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if scaler is None:
        scaler = RobustScaler.fit(X)
    Xs = np.ascontiguousarray(scaler.transform(X))
    presort = presort_features(Xs)
    base = float(np.mean(y))
    residual = y - base
    trees: List[RegressionTree] = []
    importance = np.zeros(X.shape[1])
    for m in range(n_trees):
        gen = rng.stream(rng_seed, "tree", m)
        fit = fit_tree(
            Xs,
            residual,
            max_depth=max_depth,
            min_samples_leaf=min_samples_leaf,
            seed=int(rng.kernel_seed(gen)),
            presort=presort,
        )
        trees.append(fit.tree)
        importance += fit.importance
        residual = residual - learning_rate * fit.train_pred
    norm, degenerate = _normalize_importance(importance)
    return EnsembleModel(
        algo="gradient_boost",
        trees=trees,
        scaler=scaler,
        outlier_config=outlier_config,
        hyperparams={
            "n_trees": n_trees,
            "learning_rate": learning_rate,
            "max_depth": max_depth,
            "min_samples_leaf": min_samples_leaf,
        },
        feature_importances=norm,
        rng_seed=rng_seed,
        learning_rate=learning_rate,
        base_prediction=base,
    )


def feature_importance(model: EnsembleModel) -> np.ndarray:
    """Normalized per-feature total variance reduction across all splits."""
    return model.feature_importances


def _fmt(x) -> Optional[str]:
    return None if x is None else f"{float(x):.17g}"


def model_to_document(model: EnsembleModel, report: Optional[dict] = None) -> str:
    """Serialize a model (and optionally its report) to deterministic JSON text.

    All floats are decimal strings with 17 significant digits so the document
    round-trips bit-exactly and is byte-identical across runs.
    """
    doc = {
        "algo": model.algo,
        "hyperparams": {
            k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in sorted(model.hyperparams.items())
        },
        "outlier_config": model.outlier_config.label,
        "rng_seed": model.rng_seed,
        "learning_rate": _fmt(model.learning_rate),
        "base_prediction": _fmt(model.base_prediction),
        "clamp_max": _fmt(model.clamp_max),
        "degenerate_importance": model.degenerate_importance,
        "scaler": {
            "median": [f"{v:.17g}" for v in model.scaler.median],
            "iqr": [f"{v:.17g}" for v in model.scaler.iqr],
        },
        "feature_importances": [f"{v:.17g}" for v in model.feature_importances],
        "trees": [tree_to_node_list(t) for t in model.trees],
    }
    if report is not None:
        doc["report"] = report
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def model_from_document(text: str) -> EnsembleModel:
    doc = json.loads(text)
    hyper = {
        k: (float(v) if isinstance(v, str) else v) for k, v in doc["hyperparams"].items()
    }
    scaler = RobustScaler(
        np.array([float(v) for v in doc["scaler"]["median"]]),
        np.array([float(v) for v in doc["scaler"]["iqr"]]),
    )
    return EnsembleModel(
        algo=doc["algo"],
        trees=[tree_from_node_list(nodes) for nodes in doc["trees"]],
        scaler=scaler,
        outlier_config=OutlierConfig.parse(doc["outlier_config"]),
        hyperparams=hyper,
        feature_importances=np.array([float(v) for v in doc["feature_importances"]]),
        rng_seed=doc["rng_seed"],
        learning_rate=None if doc["learning_rate"] is None else float(doc["learning_rate"]),
        base_prediction=None if doc["base_prediction"] is None else float(doc["base_prediction"]),
        degenerate_importance=doc["degenerate_importance"],
        clamp_max=None if doc["clamp_max"] is None else float(doc["clamp_max"]),
    )
