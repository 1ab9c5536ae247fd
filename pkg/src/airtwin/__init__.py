"""airtwin: a zone-level NO2 digital twin built on synthetic data.

Learns a pollution surface from sparse sensors plus static urban
features (with spatially lagged columns where autocorrelation warrants
them), generates synthetic zone measurements under what-if scenarios,
and checks that decisions taken on synthetic data match those taken on
real data.
"""

from .citygen import CityConfig, generate_synthetic_city
from .decision import (
    DecisionPolicy,
    DecisionReport,
    TwinView,
    decide,
    equality_of_decisions,
    agreement_sensitivity,
    separation_margin,
)
from .errors import TwinError
from .features import (
    FeatureCatalog,
    SelectionTrace,
    augment_with_lags,
    correlation_matrix,
    permutation_importance,
    select_features,
)
from .geo import (
    FeatureTable,
    StationMeasurement,
    Zone,
    ZoneSet,
    aggregate_stations_to_zones,
    inverse_project,
    load_eea_csv,
    project_to_planar,
    zones_from_geojson,
    zones_to_geojson,
)
from .models import (
    CvConfig,
    EvalReport,
    ForestParams,
    GbtParams,
    TreeEnsembleModel,
    TreeParams,
    accuracy_metric,
    cross_validate,
    fit_gbt,
    fit_random_forest,
    fit_tree,
    model_from_json,
    model_hash,
    model_to_json,
    predict,
)
from .spatial import (
    MoranResult,
    SpatialWeights,
    build_contiguity_weights,
    build_knn_weights,
    morans_i,
    morans_permutation_test,
    row_standardize,
    spatial_lag,
)
from .synth import (
    Scenario,
    SyntheticDataset,
    apply_scenario,
    drift_check,
    generate_synthetic,
)

__version__ = "0.1.0"

__all__ = [
    "CityConfig",
    "CvConfig",
    "DecisionPolicy",
    "DecisionReport",
    "EvalReport",
    "FeatureCatalog",
    "FeatureTable",
    "ForestParams",
    "GbtParams",
    "MoranResult",
    "Scenario",
    "SelectionTrace",
    "SpatialWeights",
    "StationMeasurement",
    "SyntheticDataset",
    "TreeEnsembleModel",
    "TreeParams",
    "TwinError",
    "TwinView",
    "Zone",
    "ZoneSet",
    "accuracy_metric",
    "aggregate_stations_to_zones",
    "apply_scenario",
    "augment_with_lags",
    "build_contiguity_weights",
    "build_knn_weights",
    "correlation_matrix",
    "cross_validate",
    "decide",
    "drift_check",
    "equality_of_decisions",
    "fit_gbt",
    "fit_random_forest",
    "fit_tree",
    "generate_synthetic",
    "generate_synthetic_city",
    "inverse_project",
    "load_eea_csv",
    "model_from_json",
    "model_hash",
    "model_to_json",
    "morans_i",
    "morans_permutation_test",
    "permutation_importance",
    "predict",
    "project_to_planar",
    "agreement_sensitivity",
    "row_standardize",
    "select_features",
    "separation_margin",
    "spatial_lag",
    "zones_from_geojson",
    "zones_to_geojson",
]
