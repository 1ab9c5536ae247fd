"""Modeling-table construction: correlations, lag augmentation, selection.

The lag gate follows the autocorrelation workflow: every static feature
gets its Moran's I measured, and those at or above the cutoff (default
0.6, overridable per feature) gain a `lag_<name>` companion column equal
to the weights-averaged neighbor value. Selection is recursive
elimination driven by permutation importance, audited step by step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DegenerateVariance, InvalidConfig, SchemaMismatch
from .geo import FeatureTable
from .models import (
    CvConfig,
    ModelSpec,
    TreeEnsembleModel,
    accuracy_metric,
    cross_validate,
    derive_seed,
    fit_model,
    predict,
)
from .spatial import SpatialWeights, morans_i, spatial_lag

LAG_PREFIX = "lag_"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    source: str  # "static" | "lagged"
    moran_i: float | None = None
    selected: bool = True
    note: str | None = None


@dataclass(frozen=True)
class FeatureCatalog:
    """Bookkeeping for every column: provenance, Moran's I, selection."""

    entries: tuple[CatalogEntry, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate catalog entry")
        statics = {e.name for e in self.entries if e.source == "static"}
        for e in self.entries:
            if e.source == "lagged" and e.name[len(LAG_PREFIX):] not in statics:
                raise SchemaMismatch(f"lagged entry {e.name} has no static source")

    def get(self, name: str) -> CatalogEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise SchemaMismatch(f"unknown catalog entry {name!r}")

    def lagged_sources(self) -> dict[str, str]:
        """lag column name -> static source column name."""
        return {
            e.name: e.name[len(LAG_PREFIX):]
            for e in self.entries
            if e.source == "lagged"
        }

    def with_selection(self, selected_names: set[str]) -> "FeatureCatalog":
        return FeatureCatalog(
            tuple(replace(e, selected=e.name in selected_names) for e in self.entries)
        )

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "name": e.name,
                    "source": e.source,
                    "moran_i": e.moran_i,
                    "selected": e.selected,
                    "note": e.note,
                }
                for e in self.entries
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FeatureCatalog":
        doc = json.loads(text)
        return cls(
            tuple(
                CatalogEntry(
                    e["name"], e["source"], e.get("moran_i"), e.get("selected", True),
                    e.get("note"),
                )
                for e in doc["entries"]
            )
        )

    @classmethod
    def load(cls, path: str | Path) -> "FeatureCatalog":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class SelectionStep:
    removed_feature: str
    cv_accuracy_after: float
    std_after: float


@dataclass(frozen=True)
class SelectionTrace:
    """Auditable record of a recursive-elimination run."""

    steps: tuple[SelectionStep, ...]
    final_set: tuple[str, ...]

    def __post_init__(self):
        if not self.final_set:
            raise InvalidConfig("final_set must be nonempty")

    def to_dict(self) -> dict:
        return {
            "steps": [
                {
                    "removed_feature": s.removed_feature,
                    "cv_accuracy_after": s.cv_accuracy_after,
                    "std_after": s.std_after,
                }
                for s in self.steps
            ],
            "final_set": list(self.final_set),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def correlation_matrix(table: FeatureTable) -> np.ndarray:
    """Pearson correlations between feature columns (and nothing else).

    Symmetric with an exactly-unit diagonal; a constant column is an
    error naming the offending feature.
    """
    if table.n < 2:
        raise InvalidConfig("need at least 2 rows")
    for name in table.feature_names:
        if np.ptp(table.X[:, table.index_of(name)]) == 0.0:
            raise DegenerateVariance(f"feature {name!r} is constant")
    corr = np.corrcoef(table.X, rowvar=False)
    corr = np.atleast_2d(corr)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def augment_with_lags(
    table: FeatureTable,
    w: SpatialWeights,
    cutoff: float = 0.6,
    cutoff_overrides: Mapping[str, float] | None = None,
) -> tuple[FeatureTable, FeatureCatalog]:
    """Append `lag_<name>` columns for features with Moran's I >= cutoff.

    Original columns are untouched; features whose variance is degenerate
    are kept un-lagged with a catalog note. Per-feature cutoff overrides
    cover the "values close to the cutoff get tuned by hand" workflow.
    """
    if not w.row_standardized:
        raise InvalidConfig("augment_with_lags requires row-standardized weights")
    overrides = dict(cutoff_overrides or {})
    entries: list[CatalogEntry] = []
    lag_names: list[str] = []
    lag_cols: list[np.ndarray] = []
    for name in table.feature_names:
        col = table.X[:, table.index_of(name)]
        try:
            result = morans_i(w, col)
        except DegenerateVariance:
            entries.append(
                CatalogEntry(name, "static", None, note="degenerate variance; not lagged")
            )
            continue
        entries.append(CatalogEntry(name, "static", result.I))
        if result.I >= overrides.get(name, cutoff):
            lag_names.append(LAG_PREFIX + name)
            lag_cols.append(spatial_lag(w, col))
    lag_entries = []
    for lname in lag_names:
        source = lname[len(LAG_PREFIX):]
        src_entry = next(e for e in entries if e.name == source)
        lag_entries.append(CatalogEntry(lname, "lagged", src_entry.moran_i))
    augmented = (
        table.with_columns(lag_names, np.column_stack(lag_cols))
        if lag_names
        else table
    )
    return augmented, FeatureCatalog(tuple(entries + lag_entries))


def permutation_importance(
    model: TreeEnsembleModel,
    table: FeatureTable,
    n_repeats: int = 5,
    seed: int = 0,
) -> dict[str, float]:
    """Mean accuracy drop when one column at a time is shuffled.

    A feature the model never touches scores exactly 0 (the shuffled
    prediction is bit-identical). Streams are per (feature, repeat), so
    repeats may run in any order without changing the result.
    """
    if model.feature_names != table.feature_names:
        raise SchemaMismatch(
            "model was not trained on this table's features"
        )
    if n_repeats < 1:
        raise InvalidConfig("n_repeats must be >= 1")
    base = accuracy_metric(table.y, predict(model, table))
    out: dict[str, float] = {}
    n = table.n
    for fi, name in enumerate(table.feature_names):
        drops = np.empty(n_repeats)
        for r in range(n_repeats):
            perm = np.random.default_rng([seed, fi, r]).permutation(n)
            shuffled = table.X.copy()
            shuffled[:, fi] = shuffled[perm, fi]
            drops[r] = base - accuracy_metric(table.y, predict(model, shuffled))
        out[name] = float(drops.mean())
    return out


def select_features(
    table: FeatureTable,
    model_spec: ModelSpec,
    target_count: int,
    cv: CvConfig = CvConfig(),
    n_repeats: int = 3,
    n_jobs: int = 1,
) -> SelectionTrace:
    """Recursive elimination down to ``target_count`` features.

    Each round fits on the full table, scores permutation importance,
    drops the weakest feature and re-validates; the trace records every
    step so the path from the wide baseline to the final set is auditable.
    """
    n_features = len(table.feature_names)
    if not 1 <= target_count < n_features:
        raise InvalidConfig(
            f"target_count must lie in [1, {n_features - 1}], got {target_count}"
        )
    current = table
    steps: list[SelectionStep] = []
    round_no = 0
    while len(current.feature_names) > target_count:
        fit_seed = derive_seed(cv.seed, round_no, 0)
        model = fit_model(
            current, replace(model_spec, seed=fit_seed), n_jobs=n_jobs
        )
        importance = permutation_importance(
            model, current, n_repeats=n_repeats, seed=derive_seed(cv.seed, round_no, 1)
        )
        weakest = min(importance, key=importance.get)  # ties -> lower column index
        current = current.drop([weakest])
        report = cross_validate(current, model_spec, cv, n_jobs=n_jobs)
        steps.append(
            SelectionStep(weakest, report.accuracy_pct, report.accuracy_std_pct)
        )
        round_no += 1
    return SelectionTrace(tuple(steps), current.feature_names)
