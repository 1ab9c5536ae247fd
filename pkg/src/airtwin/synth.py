"""Synthetic measurement generation under what-if scenarios, plus drift.

A scenario is an ordered list of perturbations over the static feature
columns. When weights and a catalog are supplied, lag columns are
recomputed after the perturbations are applied, so a change in one zone
propagates into its neighbors' lag features before prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InvalidConfig, NoData, SchemaMismatch
from .features import FeatureCatalog
from .geo import FeatureTable, write_value_csv
from .models import TreeEnsembleModel, accuracy_metric, model_hash, predict
from .spatial import SpatialWeights, spatial_lag

SCENARIO_OPS = ("set", "scale", "delta")

BASELINE_SCENARIO_ID = "baseline"


@dataclass(frozen=True)
class Perturbation:
    feature: str
    op: str
    amount: float
    zones: tuple[str, ...] | None = None  # None -> all zones

    def __post_init__(self):
        if self.op not in SCENARIO_OPS:
            raise InvalidConfig(f"unknown op {self.op!r}")
        if self.op == "scale" and self.amount <= 0:
            raise InvalidConfig("scale amount must be > 0")
        if self.zones is not None:
            object.__setattr__(self, "zones", tuple(self.zones))


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    perturbations: tuple[Perturbation, ...] = ()

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "perturbations": [
                {
                    "feature": p.feature,
                    "op": p.op,
                    "amount": p.amount,
                    **({"zones": list(p.zones)} if p.zones is not None else {}),
                }
                for p in self.perturbations
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scenario":
        perts = tuple(
            Perturbation(
                feature=p["feature"],
                op=p["op"],
                amount=float(p["amount"]),
                zones=tuple(p["zones"]) if p.get("zones") is not None else None,
            )
            for p in doc.get("perturbations", [])
        )
        return cls(str(doc.get("scenario_id", "scenario")), perts)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SyntheticDataset:
    """Model-generated zone values with full provenance."""

    zone_ids: tuple[str, ...]
    values: np.ndarray
    model_version: str
    scenario_id: str
    generated_at: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.zone_ids),):
            raise SchemaMismatch("values length does not match zone_ids")
        if not np.all(np.isfinite(v)):
            raise InvalidConfig("synthetic values must be finite")

    def as_mapping(self) -> dict[str, float]:
        return {z: float(v) for z, v in zip(self.zone_ids, self.values)}

    def write(self, csv_path: str | Path, sidecar_path: str | Path | None = None) -> None:
        """CSV zone_id,value plus a JSON provenance sidecar."""
        write_value_csv(self.zone_ids, self.values, csv_path)
        if sidecar_path is not None:
            sidecar = {
                "model_version": self.model_version,
                "scenario_id": self.scenario_id,
                "generated_at": self.generated_at,
                "n_zones": len(self.zone_ids),
            }
            Path(sidecar_path).write_text(json.dumps(sidecar, indent=2) + "\n")


def apply_scenario(table: FeatureTable, scenario: Scenario) -> FeatureTable:
    """Apply perturbations in list order to a copy of the table."""
    zone_pos = {z: i for i, z in enumerate(table.zone_ids)}
    X = table.X.copy()
    for p in scenario.perturbations:
        col = table.index_of(p.feature)
        if p.zones is None:
            rows = slice(None)
        else:
            unknown = [z for z in p.zones if z not in zone_pos]
            if unknown:
                raise SchemaMismatch(f"unknown zone ids {unknown}")
            rows = np.array([zone_pos[z] for z in p.zones], dtype=np.int64)
        if p.op == "set":
            X[rows, col] = p.amount
        elif p.op == "scale":
            X[rows, col] = X[rows, col] * p.amount
        else:
            X[rows, col] = X[rows, col] + p.amount
    return FeatureTable(table.zone_ids, table.feature_names, X, table.y)


def recompute_lags(
    table: FeatureTable, weights: SpatialWeights, catalog: FeatureCatalog
) -> FeatureTable:
    """Refresh every lag column from its (possibly perturbed) static source."""
    X = table.X.copy()
    for lag_name, source in catalog.lagged_sources().items():
        if lag_name in table.feature_names:
            X[:, table.index_of(lag_name)] = spatial_lag(
                weights, X[:, table.index_of(source)]
            )
    return FeatureTable(table.zone_ids, table.feature_names, X, table.y)


def generate_synthetic(
    model: TreeEnsembleModel,
    table: FeatureTable,
    scenario: Scenario | None = None,
    weights: SpatialWeights | None = None,
    catalog: FeatureCatalog | None = None,
) -> SyntheticDataset:
    """Predict zone values under a scenario (or the baseline).

    The table may carry more columns than the model uses (scenarios often
    perturb static features whose only modeled trace is a lag column); it
    is projected onto the model schema after lag recomputation.
    Provenance (model hash + scenario id) makes the dataset re-derivable;
    only ``generated_at`` varies between identical runs.
    """
    if scenario is not None:
        table = apply_scenario(table, scenario)
    if weights is not None and catalog is not None:
        table = recompute_lags(table, weights, catalog)
    if table.feature_names != model.feature_names:
        missing = set(model.feature_names) - set(table.feature_names)
        if missing:
            raise SchemaMismatch(f"table lacks model features {sorted(missing)}")
        table = table.select(list(model.feature_names))
    values = predict(model, table)
    return SyntheticDataset(
        zone_ids=table.zone_ids,
        values=values,
        model_version=model_hash(model),
        scenario_id=scenario.scenario_id if scenario else BASELINE_SCENARIO_ID,
        generated_at=datetime.now(timezone.utc).isoformat(),
    )


@dataclass(frozen=True)
class DriftReport:
    """Synthetic-vs-live comparison over the sensor-covered zones."""

    n_compared: int
    accuracy_pct: float
    threshold_pct: float
    status: str  # "ok" | "drift"
    residuals: dict[str, float]  # zone -> live - synthetic

    def to_dict(self) -> dict:
        return {
            "n_compared": self.n_compared,
            "accuracy_pct": self.accuracy_pct,
            "threshold_pct": self.threshold_pct,
            "status": self.status,
            "residuals": self.residuals,
        }


def drift_check(
    synthetic: SyntheticDataset,
    live: Mapping[str, float],
    threshold_pct: float = 85.0,
) -> DriftReport:
    """Compare synthetic values against live sensor readings.

    Deviation is measured relative to the synthetic value (the twin's
    expectation); status is `drift` exactly when accuracy < threshold.
    """
    overlap = [z for z in synthetic.zone_ids if z in live]
    if not overlap:
        raise NoData("no overlapping zones between synthetic and live data")
    synth_map = synthetic.as_mapping()
    y = np.array([synth_map[z] for z in overlap])
    live_v = np.array([float(live[z]) for z in overlap])
    acc = accuracy_metric(y, live_v)
    return DriftReport(
        n_compared=len(overlap),
        accuracy_pct=acc,
        threshold_pct=threshold_pct,
        status="drift" if acc < threshold_pct else "ok",
        residuals={z: float(live[z] - synth_map[z]) for z in overlap},
    )
