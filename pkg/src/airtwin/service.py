"""HTTP API over a trained twin snapshot.

The snapshot (model + augmented table + zones + weights + catalog) is
immutable and swapped atomically on reload; the active policy is a
single reference read exactly once per request, so concurrent policy
replacement can never produce a mixed-policy evaluation. Errors use
RFC-7807-style problem bodies.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from .decision import DEFAULT_POLICY, DecisionPolicy, TwinView, decide, separation_margin
from .errors import DegenerateVariance, SchemaMismatch, TwinError
from .features import FeatureCatalog
from .geo import FeatureTable, ZoneSet, read_table_csv, zones_from_geojson, zones_to_geojson
from .models import TreeEnsembleModel, model_from_json, predict
from .spatial import MoranResult, SpatialWeights, load_weights_csv, morans_permutation_test, row_standardize
from .synth import Scenario, Perturbation, generate_synthetic

MORAN_PERMUTATIONS = 199


def _problem(status: int, title: str, detail: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        media_type="application/problem+json",
        content={
            "type": "about:blank",
            "title": title,
            "status": status,
            "detail": detail,
        },
    )


@dataclass
class TwinSnapshot:
    """Everything the service needs, loaded once and never mutated."""

    model: TreeEnsembleModel
    table: FeatureTable  # full augmented table (superset of model features)
    zones: ZoneSet
    weights: SpatialWeights
    catalog: FeatureCatalog
    policy: DecisionPolicy
    snapshot_id: str
    _moran_cache: dict = field(default_factory=dict)
    _baseline: np.ndarray | None = None

    def __post_init__(self):
        missing = set(self.model.feature_names) - set(self.table.feature_names)
        if missing:
            raise SchemaMismatch(f"table lacks model features {sorted(missing)}")
        if self.table.zone_ids != self.zones.zone_ids:
            raise SchemaMismatch("table zones do not match zone geometry")
        if self.weights.n != self.zones.n:
            raise SchemaMismatch("weights size does not match zone count")

    @property
    def baseline_values(self) -> np.ndarray:
        if self._baseline is None:
            self._baseline = predict(
                self.model, self.table.select(list(self.model.feature_names))
            )
        return self._baseline

    def moran_for(self, feature: str) -> MoranResult:
        if feature not in self._moran_cache:
            col = self.table.X[:, self.table.index_of(feature)]
            self._moran_cache[feature] = morans_permutation_test(
                self.weights, col, n_perm=MORAN_PERMUTATIONS, seed=0
            )
        return self._moran_cache[feature]

    @classmethod
    def load(cls, snapshot_dir: str | Path) -> "TwinSnapshot":
        d = Path(snapshot_dir)
        model = model_from_json((d / "model.json").read_text())
        table = read_table_csv(d / "table.csv")
        zones = zones_from_geojson(d / "zones.geojson")
        weights = load_weights_csv(d / "weights.csv")
        if not weights.row_standardized:
            weights = row_standardize(weights)
        catalog = FeatureCatalog.load(d / "catalog.json")
        policy_path = d / "policy.json"
        policy = DecisionPolicy.load(policy_path) if policy_path.exists() else DEFAULT_POLICY
        digest = hashlib.sha256()
        for name in ("model.json", "table.csv", "zones.geojson", "weights.csv", "catalog.json"):
            digest.update((d / name).read_bytes())
        return cls(
            model=model,
            table=table,
            zones=zones,
            weights=weights,
            catalog=catalog,
            policy=policy,
            snapshot_id=digest.hexdigest(),
        )


class PerturbationIn(BaseModel):
    feature: str
    op: Literal["set", "scale", "delta"]
    amount: float
    zones: list[str] | None = None

    @field_validator("amount")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("amount must be finite")
        return v


class ScenarioIn(BaseModel):
    scenario_id: str | None = None
    perturbations: list[PerturbationIn] = Field(default_factory=list)


class PolicyIn(BaseModel):
    policy_id: str = "policy"
    thresholds: list[float] = Field(min_length=1)
    labels: list[str]

    @field_validator("thresholds")
    @classmethod
    def _increasing(cls, v: list[float]) -> list[float]:
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("thresholds must be strictly increasing")
        return v


def _scenario_from(body: ScenarioIn) -> Scenario:
    perts = tuple(
        Perturbation(
            feature=p.feature,
            op=p.op,
            amount=p.amount,
            zones=tuple(p.zones) if p.zones is not None else None,
        )
        for p in body.perturbations
    )
    if body.scenario_id:
        sid = body.scenario_id
    else:
        payload = json.dumps([p.model_dump() for p in body.perturbations], sort_keys=True)
        sid = "scn-" + hashlib.sha256(payload.encode()).hexdigest()[:12]
    return Scenario(sid, perts)


def create_app(
    snapshot: TwinSnapshot | None = None,
    snapshot_dir: str | Path | None = None,
    cors_origins: list[str] | None = None,
) -> FastAPI:
    app = FastAPI(title="airtwin", docs_url=None, redoc_url=None)
    if snapshot is None and snapshot_dir is not None:
        snapshot = TwinSnapshot.load(snapshot_dir)
    app.state.snapshot = snapshot
    app.state.policy = snapshot.policy if snapshot is not None else DEFAULT_POLICY
    app.state.snapshot_dir = Path(snapshot_dir) if snapshot_dir is not None else None
    app.state.reload_lock = threading.Lock()

    if cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        paths = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err.get("loc", ()))
            paths.append(f"{loc}: {err.get('msg')}")
        return _problem(422, "Validation Error", "; ".join(paths))

    @app.exception_handler(TwinError)
    async def _twin_handler(request: Request, exc: TwinError):
        if isinstance(exc, DegenerateVariance):
            return _problem(409, "Degenerate Variance", str(exc))
        if isinstance(exc, SchemaMismatch):
            return _problem(422, "Schema Mismatch", str(exc))
        return _problem(400, type(exc).__name__, str(exc))

    def _need_snapshot() -> TwinSnapshot:
        snap = app.state.snapshot
        if snap is None:
            raise _NoSnapshot()
        return snap

    class _NoSnapshot(Exception):
        pass

    @app.exception_handler(_NoSnapshot)
    async def _no_snapshot_handler(request: Request, exc: _NoSnapshot):
        return _problem(503, "No Snapshot", "no twin snapshot is loaded")

    @app.get("/api/health")
    def health():
        snap = app.state.snapshot
        return {
            "status": "ok",
            "snapshot_id": snap.snapshot_id if snap else None,
        }

    @app.get("/api/zones")
    def zones():
        snap = _need_snapshot()
        baseline = snap.baseline_values
        extra = {
            zid: {"no2_pred": float(v)}
            for zid, v in zip(snap.table.zone_ids, baseline)
        }
        if snap.table.y is not None:
            for zid, v in zip(snap.table.zone_ids, snap.table.y):
                extra[zid]["no2_real"] = float(v)
        doc = zones_to_geojson(snap.zones, extra_properties=extra)
        doc["snapshot_id"] = snap.snapshot_id
        return doc

    @app.get("/api/catalog")
    def catalog():
        snap = _need_snapshot()
        doc = snap.catalog.to_dict()
        doc["model_features"] = list(snap.model.feature_names)
        return doc

    @app.get("/api/policy")
    def get_policy():
        return app.state.policy.to_dict()

    @app.put("/api/policy")
    def put_policy(body: PolicyIn):
        try:
            policy = DecisionPolicy(body.policy_id, tuple(body.thresholds), tuple(body.labels))
        except TwinError as exc:
            return _problem(422, "Invalid Policy", str(exc))
        app.state.policy = policy  # atomic reference swap
        return policy.to_dict()

    @app.post("/api/scenarios")
    def post_scenario(body: ScenarioIn):
        snap = _need_snapshot()
        policy = app.state.policy  # single read; never re-fetched mid-request
        scenario = _scenario_from(body)
        known = set(snap.table.feature_names)
        for i, p in enumerate(scenario.perturbations):
            if p.feature not in known:
                return _problem(
                    422,
                    "Unknown Feature",
                    f"perturbations.{i}.feature: unknown feature {p.feature!r}",
                )
        dataset = generate_synthetic(
            snap.model, snap.table, scenario, weights=snap.weights, catalog=snap.catalog
        )
        view = TwinView(dataset.zone_ids, dataset.values, "synthetic")
        decisions = decide(policy, view)

        baseline_view = TwinView(snap.table.zone_ids, snap.baseline_values, "synthetic")
        baseline_decisions = decide(policy, baseline_view)
        changed = [z for z in decisions if decisions[z] != baseline_decisions[z]]
        agreement = 1.0 - len(changed) / len(decisions)
        margins, min_margin = separation_margin(policy, view)
        return {
            "scenario_id": dataset.scenario_id,
            "policy_id": policy.policy_id,
            "model_version": dataset.model_version,
            "values": dataset.as_mapping(),
            "decisions": decisions,
            "agreement_vs_baseline": agreement,
            "changed_zones": changed,
            "min_separation": min_margin,
            "margins": margins,
        }

    @app.get("/api/moran")
    def moran(feature: str = Query(...)):
        snap = _need_snapshot()
        if feature not in snap.table.feature_names:
            return _problem(404, "Unknown Feature", f"no feature named {feature!r}")
        result = snap.moran_for(feature)
        doc = result.to_dict()
        doc["feature"] = feature
        return doc

    @app.post("/api/reload")
    def reload():
        if app.state.snapshot_dir is None:
            return _problem(400, "No Snapshot Dir", "service was started without one")
        with app.state.reload_lock:
            snap = TwinSnapshot.load(app.state.snapshot_dir)
            app.state.snapshot = snap
            app.state.policy = snap.policy
        return {"status": "reloaded", "snapshot_id": snap.snapshot_id}

    return app
