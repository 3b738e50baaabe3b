"""floodline: street-view lowest-floor elevations, gated HDSL imputation, flood loss.

The package is organised as a plain numpy library plus a thin CLI:

* :mod:`floodline.geometry`   panorama geometry, LFE/HDSL extraction, quality screen
* :mod:`floodline.rasters`    ASCII-grid rasters and centroid sampling
* :mod:`floodline.features`   predictor-vector assembly for the imputation model
* :mod:`floodline.trees`      CART regression trees (compiled kernel)
* :mod:`floodline.ensemble`   robust scaling, outlier handling, RF / GB ensembles
* :mod:`floodline.evaluation` metrics, k-fold CV, randomized search, gating, workflows
* :mod:`floodline.risk`       interior flood depth, depth-damage losses, aggregation
* :mod:`floodline.synth`      synthetic AOI fixtures with known ground truth
* :mod:`floodline.stages`     file-based pipeline stages (extract / impute / assess / report)
* :mod:`floodline.cli`        ``floodline`` command-line entry point
"""

__version__ = "0.1.0"

from floodline.geometry import (
    GeoPoint,
    DepthMatrix,
    PanoramaObservation,
    ElevationEstimate,
    ScreenStatus,
    bearing,
    bearing_to_column,
    segmentation_window,
    door_bottom_pixels,
    pitch_angle,
    vertical_offset,
    estimate_lfe,
    screen,
    decode_depth,
    encode_depth,
    haversine_m,
)
from floodline.rasters import (
    RasterGrid,
    SampleResult,
    parse_ascii_grid,
    serialize_ascii_grid,
    point_sample,
    neighborhood_mean,
    to_meters,
)
from floodline.features import (
    ParcelRecord,
    StreetEncoder,
    FEATURE_COLUMNS,
    geo_cluster,
    build_features,
)
from floodline.ensemble import (
    OutlierConfig,
    RobustScaler,
    EnsembleModel,
    clean_targets,
    apply_outliers,
    fit_rf,
    fit_gb,
)
from floodline.evaluation import (
    ModelReport,
    regression_metrics,
    kfold_cv,
    randomized_search,
    select_and_gate,
    run_workflow,
)
from floodline.risk import (
    DDF_POINTS_FT,
    fdis,
    ddf,
    loss,
    value_filter,
    classify,
    aggregate,
    sensitivity,
)
