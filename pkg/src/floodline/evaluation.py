"""Model evaluation, hyperparameter search, gating, and the two workflows.

Two training workflows exist per AOI. Batch Standard fits one RF and one GB
with fixed hyperparameters on IQR-filtered (3.0x) data and keeps whichever
scores higher on a seeded 20% hold-out. Tuning Extended runs a randomized
hyperparameter search (30 draws per algorithm) across six outlier-handling
configurations, scoring every draw by 5-fold cross-validation, then picks the
candidate that maximizes CV R-squared, breaking near-ties (within 0.01)
toward the smallest absolute overfitting gap.

An AOI only emits imputed values when the best cross-validated R-squared
clears the gate threshold (default 0.15); otherwise it is retained for
extraction-only analysis.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
import multiprocessing
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from floodline import rng
from floodline.ensemble import (
    OUTLIER_CONFIGS,
    EnsembleModel,
    InapplicableConfig,
    OutlierConfig,
    RobustScaler,
    apply_outliers,
    fit_gb,
    fit_rf,
)

log = logging.getLogger(__name__)


def _pool_context():
    """fork where available (fast, works from any __main__), else default."""
    try:
        return multiprocessing.get_context("fork")
    except ValueError:  # pragma: no cover - non-POSIX platforms
        return multiprocessing.get_context()


DEFAULT_GATE_THRESHOLD = 0.15
DEFAULT_TIE_WINDOW = 0.01
DEFAULT_N_ITER = 30
DEFAULT_K_FOLDS = 5
HOLDOUT_FRACTION = 0.2
PREDICTION_CLAMP_QUANTILE = 0.995

# hyperparameter search spaces (key order fixes the enumeration order)
RF_SPACE = {
    "n_trees": (50, 100, 200, 300, 500),
    "max_depth": (4, 6, 8, 12, 16, None),
    "min_samples_leaf": (1, 2, 4, 8),
    "feature_subset_size": (4, 5, None),
}
GB_SPACE = {
    "n_trees": (50, 100, 200, 300, 500),
    "learning_rate": (0.01, 0.03, 0.05, 0.1, 0.2, 0.3),
    "max_depth": (2, 3, 4, 6),
    "min_samples_leaf": (1, 2, 4, 8),
}

BATCH_RF_PARAMS = {"n_trees": 300, "max_depth": None, "min_samples_leaf": 1, "feature_subset_size": 5}
BATCH_GB_PARAMS = {"n_trees": 300, "learning_rate": 0.1, "max_depth": 3, "min_samples_leaf": 1}
BATCH_OUTLIER = OutlierConfig("iqr_filter", 3.0)

ALGOS = ("random_forest", "gradient_boost")


def regression_metrics(pred: np.ndarray, obs: np.ndarray):
    """(rmse, rmse_pct, r2); rmse_pct/r2 are None where undefined."""
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if len(pred) != len(obs) or len(obs) < 1:
        raise ValueError("pred and obs must be equal-length and non-empty")
    rmse = float(np.sqrt(np.mean((pred - obs) ** 2)))
    mean_obs = float(np.mean(obs))
    rmse_pct = None if mean_obs == 0.0 else 100.0 * rmse / mean_obs
    ss_tot = float(np.sum((obs - mean_obs) ** 2))
    if ss_tot == 0.0:
        return rmse, rmse_pct, None
    ss_res = float(np.sum((obs - pred) ** 2))
    return rmse, rmse_pct, 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class ModelSpec:
    """Algorithm + hyperparameters + outlier strategy, fittable with any seed."""

    algo: str
    hyperparams: tuple  # sorted (key, value) pairs, hashable
    outlier_config: OutlierConfig

    @classmethod
    def make(cls, algo: str, params: dict, outlier_config: OutlierConfig) -> "ModelSpec":
        return cls(algo, tuple(sorted(params.items())), outlier_config)

    @property
    def params(self) -> dict:
        return dict(self.hyperparams)

    def fit(self, X: np.ndarray, y: np.ndarray, rng_seed: int) -> EnsembleModel:
        Xo, yo = apply_outliers(X, y, self.outlier_config)
        if len(yo) < 1:
            raise InapplicableConfig("outlier handling removed every training row")
        scaler = RobustScaler.fit(Xo)
        if self.algo == "random_forest":
            return fit_rf(Xo, yo, rng_seed=rng_seed, outlier_config=self.outlier_config, scaler=scaler, **self.params)
        if self.algo == "gradient_boost":
            return fit_gb(Xo, yo, rng_seed=rng_seed, outlier_config=self.outlier_config, scaler=scaler, **self.params)
        raise ValueError(f"unknown algo {self.algo!r}")


def fold_sizes(n: int, k: int) -> List[int]:
    """Near-equal fold sizes; the first n % k folds take the extra row."""
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def kfold_partition(n: int, k: int, partition_seed: int) -> List[np.ndarray]:
    """Seeded shuffle split into k folds of near-equal size."""
    order = rng.stream(partition_seed, "kfold-partition").permutation(n)
    folds = []
    pos = 0
    for size in fold_sizes(n, k):
        folds.append(order[pos : pos + size])
        pos += size
    return folds


def kfold_cv(
    X: np.ndarray,
    y: np.ndarray,
    spec: ModelSpec,
    k: int = DEFAULT_K_FOLDS,
    rng_seed: int = 0,
    partition_seed: Optional[int] = None,
) -> Optional[float]:
    """Average R-squared across k folds; None when n < k or undefined everywhere.

    `partition_seed` lets several candidates share one partition so their CV
    scores are comparable; it defaults to `rng_seed`.
    """
    n = len(y)
    if n < k:
        return None
    folds = kfold_partition(n, k, rng_seed if partition_seed is None else partition_seed)
    r2s = []
    for i, fold in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        model = spec.fit(X[mask], y[mask], rng_seed=rng.child_seed(rng_seed, "fold", i))
        _, _, r2 = regression_metrics(model.predict(X[fold]), y[fold])
        if r2 is not None:
            r2s.append(r2)
    if not r2s:
        return None
    return float(np.mean(r2s))


@dataclass
class Candidate:
    """One evaluated configuration."""

    spec: ModelSpec
    r2_cv: Optional[float]
    rmse_m: Optional[float] = None
    rmse_pct: Optional[float] = None
    r2: Optional[float] = None  # hold-out validation R-squared
    index: int = 0  # enumeration order, final tie-break

    @property
    def gap(self) -> Optional[float]:
        if self.r2 is None or self.r2_cv is None:
            return None
        return self.r2 - self.r2_cv


def holdout_split(n: int, rng_seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle; first 80% of the order trains, the rest validates."""
    order = rng.stream(rng_seed, "holdout").permutation(n)
    n_train = int(math.floor(n * (1.0 - HOLDOUT_FRACTION)))
    return order[:n_train], order[n_train:]


def evaluate_candidate(
    X: np.ndarray,
    y: np.ndarray,
    spec: ModelSpec,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    fit_seed: int,
    k_folds: int,
    cv_partition_seed: int,
    index: int = 0,
) -> Candidate:
    """Hold-out metrics plus k-fold CV R-squared for one spec."""
    model = spec.fit(X[train_idx], y[train_idx], rng_seed=rng.child_seed(fit_seed, "holdout-fit"))
    rmse, rmse_pct, r2 = regression_metrics(model.predict(X[val_idx]), y[val_idx])
    r2_cv = kfold_cv(X, y, spec, k=k_folds, rng_seed=fit_seed, partition_seed=cv_partition_seed)
    return Candidate(spec, r2_cv, rmse, rmse_pct, r2, index)


def enumerate_space(space: dict) -> List[dict]:
    keys = list(space)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(space[k] for k in keys))]


def sample_configs(space: dict, n_iter: int, gen: np.random.Generator) -> List[dict]:
    """Uniform sample without replacement; whole space when it is small enough."""
    full = enumerate_space(space)
    if len(full) <= n_iter:
        return full
    picks = gen.choice(len(full), size=n_iter, replace=False)
    return [full[i] for i in picks]


def _search_cell(payload) -> Tuple[str, str, Optional[Candidate]]:
    """Evaluate one (algorithm, outlier config) cell of the search grid.

    Top-level so a process pool can run cells concurrently; the per-cell
    seeds derive from the cell labels, so results do not depend on which
    process evaluates which cell.
    """
    X, y, algo, label, n_iter, rng_seed, k_folds, tie_window, train_idx, val_idx = payload
    space = RF_SPACE if algo == "random_forest" else GB_SPACE
    cfg = OutlierConfig.parse(label)
    cv_partition_seed = rng.child_seed(rng_seed, "cv-partition")
    gen = rng.stream(rng_seed, "sample", algo, label)
    candidates = []
    for i, params in enumerate(sample_configs(space, n_iter, gen)):
        spec = ModelSpec.make(algo, params, cfg)
        fit_seed = rng.child_seed(rng_seed, algo, label, "iter", i)
        try:
            cand = evaluate_candidate(
                X, y, spec, train_idx, val_idx, fit_seed, k_folds, cv_partition_seed, index=i
            )
        except InapplicableConfig as exc:
            log.info("skipping %s/%s iteration %d: %s", algo, label, i, exc)
            continue
        candidates.append(cand)
    return algo, label, select_best(candidates, tie_window)


def _run_search_cells(payloads: List[tuple], workers: int) -> List[Tuple[str, str, Optional[Candidate]]]:
    if workers <= 1 or len(payloads) <= 1:
        return [_search_cell(p) for p in payloads]
    with _pool_context().Pool(min(workers, len(payloads))) as pool:
        return pool.map(_search_cell, payloads)


def randomized_search(
    X: np.ndarray,
    y: np.ndarray,
    algo: str,
    n_iter: int = DEFAULT_N_ITER,
    rng_seed: int = 0,
    k_folds: int = DEFAULT_K_FOLDS,
    tie_window: float = DEFAULT_TIE_WINDOW,
    outlier_labels: Sequence[str] = OUTLIER_CONFIGS,
    train_idx: Optional[np.ndarray] = None,
    val_idx: Optional[np.ndarray] = None,
    workers: int = 1,
) -> Dict[str, Candidate]:
    """Best candidate per outlier configuration for one algorithm.

    Draws n_iter hyperparameter configurations per outlier configuration,
    scores each by hold-out metrics and k-fold CV, and keeps the per-cell best
    under the CV-first, smallest-gap-within-tie-window rule. Inapplicable
    cells are skipped with a logged reason.
    """
    if len(y) == 0:
        raise ValueError("randomized_search needs training rows")
    if train_idx is None or val_idx is None:
        train_idx, val_idx = holdout_split(len(y), rng.child_seed(rng_seed, "search"))
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    payloads = [
        (X, y, algo, label, n_iter, rng_seed, k_folds, tie_window, train_idx, val_idx)
        for label in outlier_labels
    ]
    best: Dict[str, Candidate] = {}
    for _, label, chosen in _run_search_cells(payloads, workers):
        if chosen is None:
            log.info("outlier config %s inapplicable for %s: no scored candidates", label, algo)
        else:
            best[label] = chosen
    return best


def select_best(candidates: Sequence[Candidate], tie_window: float = DEFAULT_TIE_WINDOW) -> Optional[Candidate]:
    """CV-first selection: among candidates within tie_window of the best CV
    R-squared, the smallest absolute gap wins (then higher CV, then order)."""
    scored = [c for c in candidates if c.r2_cv is not None]
    if not scored:
        return None
    best_cv = max(c.r2_cv for c in scored)
    window = [c for c in scored if c.r2_cv >= best_cv - tie_window]
    return min(
        window,
        key=lambda c: (abs(c.gap) if c.gap is not None else math.inf, -c.r2_cv, c.index),
    )


def select_and_gate(
    candidates: Sequence[Candidate],
    threshold: float = DEFAULT_GATE_THRESHOLD,
    tie_window: float = DEFAULT_TIE_WINDOW,
) -> Tuple[Optional[Candidate], bool]:
    """Pick the final candidate and decide whether the AOI may emit predictions.

    The gate passes when the best CV R-squared among all candidates reaches
    the threshold; a failed gate means the AOI keeps only extracted values.
    """
    chosen = select_best(candidates, tie_window)
    if chosen is None:
        return None, False
    best_cv = max(c.r2_cv for c in candidates if c.r2_cv is not None)
    return chosen, best_cv >= threshold


@dataclass
class ModelReport:
    """Per-AOI model evaluation summary (one Table-style row)."""

    aoi_id: str
    workflow: str
    algo: Optional[str]
    outlier_config: Optional[str]
    n_train: int
    rmse_m: Optional[float]
    rmse_pct: Optional[float]
    r2: Optional[float]
    r2_cv: Optional[float]
    gap: Optional[float]
    selected: bool
    gate_passed: bool
    n_clamped: int = 0
    hyperparams: dict = field(default_factory=dict)
    note: str = ""


@dataclass
class WorkflowResult:
    model: Optional[EnsembleModel]
    report: ModelReport
    predictions: Dict[str, float]  # parcel_id -> imputed HDSL (empty when gated out)


@dataclass
class WorkflowParams:
    gate_threshold: float = DEFAULT_GATE_THRESHOLD
    tie_window: float = DEFAULT_TIE_WINDOW
    n_iter: int = DEFAULT_N_ITER
    k_folds: int = DEFAULT_K_FOLDS
    workers: int = 1  # search-cell parallelism; results are worker-count invariant


def _gate_failed_report(aoi_id: str, mode: str, n_train: int, note: str) -> ModelReport:
    return ModelReport(
        aoi_id=aoi_id,
        workflow=mode,
        algo=None,
        outlier_config=None,
        n_train=n_train,
        rmse_m=None,
        rmse_pct=None,
        r2=None,
        r2_cv=None,
        gap=None,
        selected=False,
        gate_passed=False,
        note=note,
    )


def run_workflow(
    train_X: np.ndarray,
    train_y: np.ndarray,
    predict_X: np.ndarray,
    predict_ids: Sequence[str],
    mode: str,
    rng_seed: int,
    aoi_id: str = "",
    params: Optional[WorkflowParams] = None,
) -> WorkflowResult:
    """Train, evaluate, gate, and (when gated in) impute HDSL for an AOI.

    `train_y` must already be cleaned. Imputed predictions are clamped to
    [0, P99.5 of the final model's training targets].
    """
    params = params or WorkflowParams()
    n = len(train_y)
    if n < 2:
        return WorkflowResult(None, _gate_failed_report(aoi_id, mode, n, "insufficient training rows"), {})

    train_idx, val_idx = holdout_split(n, rng.child_seed(rng_seed, "search"))
    if len(val_idx) == 0 or len(train_idx) == 0:
        return WorkflowResult(None, _gate_failed_report(aoi_id, mode, n, "hold-out split degenerate"), {})

    if mode == "batch_standard":
        candidates = []
        cv_partition_seed = rng.child_seed(rng_seed, "cv-partition")
        for i, (algo, p) in enumerate(
            (("random_forest", BATCH_RF_PARAMS), ("gradient_boost", BATCH_GB_PARAMS))
        ):
            spec = ModelSpec.make(algo, p, BATCH_OUTLIER)
            fit_seed = rng.child_seed(rng_seed, "batch", algo)
            try:
                candidates.append(
                    evaluate_candidate(
                        train_X, train_y, spec, train_idx, val_idx, fit_seed, params.k_folds, cv_partition_seed, i
                    )
                )
            except InapplicableConfig as exc:
                log.info("batch candidate %s inapplicable: %s", algo, exc)
        if not candidates:
            return WorkflowResult(None, _gate_failed_report(aoi_id, mode, n, "no applicable candidate"), {})
        # batch selection: the higher hold-out validation R-squared wins
        chosen = max(candidates, key=lambda c: (c.r2 if c.r2 is not None else -math.inf, -c.index))
        gate_passed = chosen.r2_cv is not None and chosen.r2_cv >= params.gate_threshold
    elif mode == "tuning_extended":
        X = np.asarray(train_X, dtype=np.float64)
        yv = np.asarray(train_y, dtype=np.float64)
        payloads = [
            (X, yv, algo, label, params.n_iter, rng_seed, params.k_folds, params.tie_window, train_idx, val_idx)
            for algo in ALGOS
            for label in OUTLIER_CONFIGS
        ]
        per_cell = [c for _, _, c in _run_search_cells(payloads, params.workers) if c is not None]
        chosen, gate_passed = select_and_gate(per_cell, params.gate_threshold, params.tie_window)
        if chosen is None:
            return WorkflowResult(None, _gate_failed_report(aoi_id, mode, n, "no scored candidate"), {})
    else:
        raise ValueError(f"unknown workflow mode {mode!r}")

    # final model refit on the full cleaned training set
    final_model = chosen.spec.fit(train_X, train_y, rng_seed=rng.child_seed(rng_seed, "final-fit"))
    _, y_final = apply_outliers(train_X, train_y, chosen.spec.outlier_config)
    final_model.clamp_max = float(np.quantile(y_final, PREDICTION_CLAMP_QUANTILE))

    report = ModelReport(
        aoi_id=aoi_id,
        workflow=mode,
        algo=chosen.spec.algo,
        outlier_config=chosen.spec.outlier_config.label,
        n_train=n,
        rmse_m=chosen.rmse_m,
        rmse_pct=chosen.rmse_pct,
        r2=chosen.r2,
        r2_cv=chosen.r2_cv,
        gap=chosen.gap,
        selected=True,
        gate_passed=gate_passed,
        hyperparams=chosen.spec.params,
    )

    predictions: Dict[str, float] = {}
    if gate_passed and len(predict_ids) > 0:
        raw = final_model.predict(predict_X)
        clamped = np.clip(raw, 0.0, final_model.clamp_max)
        report.n_clamped = int(np.sum(clamped != raw))
        predictions = {pid: float(v) for pid, v in zip(predict_ids, clamped)}
    if not gate_passed:
        return WorkflowResult(None, report, {})
    return WorkflowResult(final_model, report, predictions)
