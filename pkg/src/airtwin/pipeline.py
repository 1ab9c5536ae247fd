"""End-to-end pipeline: ingest -> weights -> lags -> train -> select ->
evaluate -> synthesize -> decide -> sensitivity, with every artifact
(delimited files, JSON reports, rendered figures) dropped into one
output directory that doubles as the service snapshot.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import report
from .citygen import CityConfig, generate_synthetic_city
from .decision import (
    DEFAULT_POLICY,
    DecisionPolicy,
    TwinView,
    equality_of_decisions,
    agreement_sensitivity,
    write_sensitivity_csv,
)
from .errors import InvalidConfig, TwinError
from .features import augment_with_lags, correlation_matrix, select_features
from .geo import (
    FeatureTable,
    aggregate_stations_to_zones,
    load_eea_csv,
    write_table_csv,
    write_value_csv,
    zones_from_geojson,
    zones_to_geojson,
)
from .models import (
    CvConfig,
    ForestParams,
    GbtParams,
    cross_validate,
    derive_seed,
    eval_report_to_json,
    fit_gbt,
    fit_random_forest,
    model_to_json,
)
from .spatial import (
    build_contiguity_weights,
    build_knn_weights,
    morans_i,
    row_standardize,
    save_weights_csv,
)
from .synth import Scenario, drift_check, generate_synthetic


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved run configuration; defaults are recorded for provenance."""

    seed: int = 1
    threads: int = 1
    out_dir: str = "runs/demo"
    # procedural-city inputs (used when no zones file is given)
    n_zones: int = 400
    rho: float = 0.6
    noise_sd: float = 1.0
    city_extra: Mapping[str, Any] = field(default_factory=dict)
    # file inputs
    zones_geojson: str | None = None
    eea_csv: str | None = None
    pollutant: str = "NO2"
    window_start: str | None = None
    window_end: str | None = None
    # spatial weights
    weights_scheme: str = "knn"
    weights_k: int = 8
    # lag gate
    moran_cutoff: float = 0.6
    moran_permutations: int = 999
    # feature selection
    selection_target: int = 8
    selection_repeats: int = 3
    selection_spec: ForestParams = field(
        default_factory=lambda: ForestParams(
            n_trees=20, max_depth=9, min_samples_leaf=2, feature_subsample=0.5
        )
    )
    # evaluation models
    rf_spec: ForestParams = field(
        default_factory=lambda: ForestParams(
            n_trees=100, max_depth=12, min_samples_leaf=2, feature_subsample=0.5
        )
    )
    gbt_spec: GbtParams = field(
        default_factory=lambda: GbtParams(
            n_trees=150, learning_rate=0.08, max_depth=4, min_samples_leaf=2
        )
    )
    cv: CvConfig = field(default_factory=lambda: CvConfig(k=10, seed=42))
    # decision layer
    policy_path: str | None = None
    scenario_path: str | None = None
    sensitivity_sds: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 4.0)
    sensitivity_trials: int = 300
    figures: bool = True

    def __post_init__(self):
        if not -1.0 <= self.moran_cutoff <= 1.0:
            raise InvalidConfig("moran cutoff must lie in [-1, 1]")
        if self.weights_k < 2:
            raise InvalidConfig("weights k must be >= 2")
        if self.weights_scheme not in ("knn", "rook", "queen"):
            raise InvalidConfig(f"unknown weights scheme {self.weights_scheme!r}")
        if self.threads < 1:
            raise InvalidConfig("threads must be >= 1")
        if (self.zones_geojson is None) != (self.eea_csv is None):
            raise InvalidConfig("zones_geojson and eea_csv must be given together")

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, (ForestParams, GbtParams, CvConfig)):
                return dict(v.__dict__)
            if isinstance(v, tuple):
                return list(v)
            return v

        return {k: plain(v) for k, v in self.__dict__.items()}


_SECTION_KEYS = {
    "city": {
        "n_zones", "rho", "noise_sd", "coefficients", "interaction_coef",
        "cell_size_m", "jitter", "knn_k", "target_mean", "target_sd",
    },
    "data": {"zones_geojson", "eea_csv", "pollutant", "window_start", "window_end"},
    "weights": {"scheme", "k"},
    "moran": {"cutoff", "permutations"},
    "selection": {"target_count", "n_repeats"},
    "cv": {"k", "seed", "shuffle"},
    "policy": {"path"},
    "scenario": {"path"},
    "sensitivity": {"noise_sds", "trials"},
}


def _forest_from(section: Mapping[str, Any], base: ForestParams) -> ForestParams:
    allowed = {
        "n_trees", "max_depth", "min_samples_leaf", "feature_subsample", "bootstrap",
    }
    unknown = set(section) - allowed
    if unknown:
        raise InvalidConfig(f"unknown forest keys {sorted(unknown)}")
    return replace(base, **section)


def _gbt_from(section: Mapping[str, Any], base: GbtParams) -> GbtParams:
    allowed = {
        "n_trees", "learning_rate", "max_depth", "min_samples_leaf", "subsample_rows",
    }
    unknown = set(section) - allowed
    if unknown:
        raise InvalidConfig(f"unknown gbt keys {sorted(unknown)}")
    return replace(base, **section)


def config_from_dict(doc: Mapping[str, Any]) -> PipelineConfig:
    """Build a PipelineConfig from a parsed TOML/JSON document."""
    cfg = PipelineConfig()
    top: dict[str, Any] = {}
    for key in ("seed", "threads", "out_dir", "figures"):
        if key in doc:
            top[key] = doc[key]

    known_sections = set(_SECTION_KEYS) | {"rf", "gbt", "selection_model"}
    unknown = set(doc) - known_sections - {"seed", "threads", "out_dir", "figures"}
    if unknown:
        raise InvalidConfig(f"unknown config keys {sorted(unknown)}")

    for section, keys in _SECTION_KEYS.items():
        body = doc.get(section, {})
        bad = set(body) - keys
        if bad:
            raise InvalidConfig(f"unknown keys {sorted(bad)} in [{section}]")

    city = doc.get("city", {})
    data = doc.get("data", {})
    weights = doc.get("weights", {})
    moran = doc.get("moran", {})
    selection = doc.get("selection", {})
    sens = doc.get("sensitivity", {})

    sel_spec = _forest_from(doc.get("selection_model", {}), cfg.selection_spec)
    city_extra = {
        k: v for k, v in city.items() if k not in ("n_zones", "rho", "noise_sd")
    }
    return PipelineConfig(
        **top,
        n_zones=city.get("n_zones", cfg.n_zones),
        rho=city.get("rho", cfg.rho),
        noise_sd=city.get("noise_sd", cfg.noise_sd),
        city_extra=city_extra,
        zones_geojson=data.get("zones_geojson"),
        eea_csv=data.get("eea_csv"),
        pollutant=data.get("pollutant", cfg.pollutant),
        window_start=data.get("window_start"),
        window_end=data.get("window_end"),
        weights_scheme=weights.get("scheme", cfg.weights_scheme),
        weights_k=weights.get("k", cfg.weights_k),
        moran_cutoff=moran.get("cutoff", cfg.moran_cutoff),
        moran_permutations=moran.get("permutations", cfg.moran_permutations),
        selection_target=selection.get("target_count", cfg.selection_target),
        selection_repeats=selection.get("n_repeats", cfg.selection_repeats),
        selection_spec=sel_spec,
        rf_spec=_forest_from(doc.get("rf", {}), cfg.rf_spec),
        gbt_spec=_gbt_from(doc.get("gbt", {}), cfg.gbt_spec),
        cv=CvConfig(
            k=doc.get("cv", {}).get("k", 10),
            seed=doc.get("cv", {}).get("seed", 42),
            shuffle=doc.get("cv", {}).get("shuffle", True),
        ),
        policy_path=doc.get("policy", {}).get("path"),
        scenario_path=doc.get("scenario", {}).get("path"),
        sensitivity_sds=tuple(sens.get("noise_sds", cfg.sensitivity_sds)),
        sensitivity_trials=sens.get("trials", cfg.sensitivity_trials),
    )


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    doc: dict[str, Any] = {}
    if path is not None:
        raw = Path(path).read_bytes()
        doc = tomllib.loads(raw.decode())
    if overrides:
        doc = _deep_merge(doc, overrides)
    return config_from_dict(doc)


def _deep_merge(base: Mapping, extra: Mapping) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _stage(name: str, **kv) -> None:
    parts = [f"stage={name}"] + [f"{k}={v}" for k, v in kv.items()]
    print(" ".join(parts))


def run_pipeline(cfg: PipelineConfig) -> int:
    """Run every stage and write the artifact set into cfg.out_dir."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    current_stage = "config"
    try:
        # -- ingest ---------------------------------------------------
        current_stage = "ingest"
        if cfg.zones_geojson is not None:
            zones = zones_from_geojson(cfg.zones_geojson)
            result = load_eea_csv(cfg.eea_csv, pollutant=cfg.pollutant)
            w0 = datetime.fromisoformat(cfg.window_start)
            w1 = datetime.fromisoformat(cfg.window_end)
            agg = aggregate_stations_to_zones(
                list(result.measurements), zones, cfg.pollutant, (w0, w1)
            )
            static = zones.feature_table()
            covered = agg.covered
            train_table = static.subset_rows(covered).with_target(agg.values[covered])
            _stage(
                "ingest",
                source="files",
                n_zones=zones.n,
                covered=int(covered.sum()),
                dropped_negative=result.dropped_negative,
                skipped_pollutant=result.skipped_pollutant,
            )
        else:
            zones, full_table = generate_synthetic_city(
                cfg.seed,
                cfg.n_zones,
                CityConfig(
                    seed=cfg.seed,
                    n_zones=cfg.n_zones,
                    rho=cfg.rho,
                    noise_sd=cfg.noise_sd,
                    **cfg.city_extra,
                ),
            )
            covered = np.ones(zones.n, dtype=bool)
            train_table = full_table
            _stage("ingest", source="generator", n_zones=zones.n, seed=cfg.seed)
        (out / "zones.geojson").write_text(
            json.dumps(zones_to_geojson(zones), indent=None, sort_keys=True) + "\n"
        )

        # -- weights --------------------------------------------------
        current_stage = "weights"
        if cfg.weights_scheme == "knn":
            weights = build_knn_weights(zones, cfg.weights_k)
        else:
            weights = build_contiguity_weights(zones, cfg.weights_scheme)
        weights = row_standardize(weights)
        save_weights_csv(weights, out / "weights.csv")
        _stage(
            "weights",
            scheme=cfg.weights_scheme,
            k=cfg.weights_k,
            islands=len(weights.islands),
        )

        # -- moran + lag augmentation ----------------------------------
        current_stage = "augment"
        covered_weights = weights
        if not covered.all():
            # training happens on covered zones only; restrict W to them
            covered_idx = np.flatnonzero(covered)
            remap = {int(o): i for i, o in enumerate(covered_idx)}
            rows = []
            for o in covered_idx:
                idx, wt = weights.rows[int(o)]
                keep = [k for k, j in enumerate(idx) if int(j) in remap]
                new_idx = np.array([remap[int(idx[k])] for k in keep], dtype=np.int64)
                rows.append((new_idx, wt[keep]))
            from .spatial import SpatialWeights

            covered_weights = row_standardize(
                SpatialWeights(len(covered_idx), tuple(rows), weights.scheme, False)
            )
        table, catalog = augment_with_lags(
            train_table, covered_weights, cutoff=cfg.moran_cutoff
        )
        (out / "catalog.json").write_text(catalog.to_json())
        moran_rows = [
            (e.name, e.moran_i)
            for e in catalog.entries
            if e.source == "static" and e.moran_i is not None
        ]
        with (out / "moran.csv").open("w") as fh:
            fh.write("feature,moran_i\n")
            for name, i_val in moran_rows:
                fh.write(f"{name},{i_val!r}\n")
        n_lagged = sum(1 for e in catalog.entries if e.source == "lagged")
        _stage(
            "augment",
            cutoff=cfg.moran_cutoff,
            lagged=n_lagged,
            columns=len(table.feature_names),
        )

        # -- correlation ------------------------------------------------
        current_stage = "correlation"
        corr = correlation_matrix(table)
        report.write_correlation_csv(corr, table.feature_names, out / "correlation.csv")
        if cfg.figures:
            report.save_correlation_heatmap(
                corr, table.feature_names, out / "correlation_matrix.png"
            )
        _stage("correlation", columns=len(table.feature_names))

        # -- baseline model over all columns ----------------------------
        current_stage = "baseline"
        rf_seed = derive_seed(cfg.seed, 101)
        baseline_spec = replace(cfg.rf_spec, seed=rf_seed)
        baseline_report = cross_validate(table, baseline_spec, cfg.cv, n_jobs=cfg.threads)
        (out / "eval_report_baseline.json").write_text(
            eval_report_to_json(baseline_report)
        )
        _stage(
            "baseline",
            features=len(table.feature_names),
            accuracy=f"{baseline_report.accuracy_pct:.3f}",
            std=f"{baseline_report.accuracy_std_pct:.3f}",
        )

        # -- feature selection ------------------------------------------
        current_stage = "selection"
        sel_spec = replace(cfg.selection_spec, seed=derive_seed(cfg.seed, 102))
        trace = select_features(
            table,
            sel_spec,
            target_count=cfg.selection_target,
            cv=cfg.cv,
            n_repeats=cfg.selection_repeats,
            n_jobs=cfg.threads,
        )
        (out / "selection_trace.json").write_text(trace.to_json())
        selected_catalog = catalog.with_selection(set(trace.final_set))
        (out / "catalog.json").write_text(selected_catalog.to_json())
        if cfg.figures:
            report.save_selection_curve(
                trace, len(table.feature_names), out / "selection_curve.png"
            )
        selected = table.select(list(trace.final_set))
        _stage(
            "selection",
            start=len(table.feature_names),
            final=len(trace.final_set),
            accuracy=f"{trace.steps[-1].cv_accuracy_after:.3f}",
        )

        # -- final models -----------------------------------------------
        current_stage = "evaluate"
        selected_rf_report = cross_validate(
            selected, replace(cfg.rf_spec, seed=rf_seed), cfg.cv, n_jobs=cfg.threads
        )
        (out / "eval_report_selected_rf.json").write_text(
            eval_report_to_json(selected_rf_report)
        )
        gbt_spec = replace(cfg.gbt_spec, seed=derive_seed(cfg.seed, 103))
        final_report = cross_validate(selected, gbt_spec, cfg.cv, n_jobs=cfg.threads)
        (out / "eval_report.json").write_text(eval_report_to_json(final_report))
        model = fit_gbt(selected, gbt_spec)
        (out / "model.json").write_text(model_to_json(model) + "\n")
        if cfg.figures:
            report.save_importance_bars(
                model.impurity_importances, out / "feature_importance.png"
            )
            if final_report.oof_predictions is not None:
                abs_err = np.abs(selected.y - final_report.oof_predictions)
                acc_zone = 100.0 * (1.0 - abs_err / selected.y)
                report.save_choropleth(
                    zones,
                    _expand(acc_zone, covered),
                    out / "accuracy_map.png",
                    "Out-of-fold accuracy per zone",
                    value_label="accuracy (%), darker is less accurate",
                    cmap="cividis",
                )
        _stage(
            "evaluate",
            rf_selected=f"{selected_rf_report.accuracy_pct:.3f}",
            gbt=f"{final_report.accuracy_pct:.3f}",
            gbt_std=f"{final_report.accuracy_std_pct:.3f}",
            mean_target=f"{final_report.mean_target:.6f}",
        )

        # -- persist the augmented table (snapshot input) ----------------
        current_stage = "snapshot"
        write_table_csv(table, out / "table.csv")
        write_value_csv(train_table.zone_ids, train_table.y, out / "real.csv")

        # -- synthetic data ----------------------------------------------
        current_stage = "synth"
        scenario = (
            Scenario.load(cfg.scenario_path) if cfg.scenario_path is not None else None
        )
        synthetic = generate_synthetic(
            model, table, scenario, weights=covered_weights, catalog=selected_catalog
        )
        synthetic.write(out / "synthetic.csv", out / "synthetic_provenance.json")
        if cfg.figures:
            report.save_choropleth(
                zones,
                _expand(synthetic.values, covered),
                out / "no2_synthetic.png",
                f"Synthetic NO2 ({synthetic.scenario_id})",
            )
            report.save_choropleth(
                zones,
                _expand(train_table.y, covered),
                out / "no2_real.png",
                "Observed NO2",
            )
        drift = drift_check(
            synthetic, dict(zip(train_table.zone_ids, train_table.y)), threshold_pct=85.0
        )
        (out / "drift_report.json").write_text(
            json.dumps(drift.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        _stage(
            "synth",
            scenario=synthetic.scenario_id,
            drift_status=drift.status,
            drift_accuracy=f"{drift.accuracy_pct:.3f}",
        )

        # -- decisions ----------------------------------------------------
        current_stage = "decide"
        policy = (
            DecisionPolicy.load(cfg.policy_path)
            if cfg.policy_path is not None
            else DEFAULT_POLICY
        )
        (out / "policy.json").write_text(policy.to_json())
        real_view = TwinView(train_table.zone_ids, train_table.y, "real")
        synth_map = synthetic.as_mapping()
        synth_view = TwinView(
            train_table.zone_ids,
            np.array([synth_map[z] for z in train_table.zone_ids]),
            "synthetic",
        )
        decision_report = equality_of_decisions(policy, real_view, synth_view)
        decision_report.write_csv(out / "decisions.csv")
        (out / "decisions.json").write_text(decision_report.to_json())
        _stage(
            "decide",
            policy=policy.policy_id,
            agreement=f"{decision_report.agreement_rate:.4f}",
            min_margin=f"{decision_report.min_separation_real:.3f}",
        )

        # -- sensitivity ----------------------------------------------------
        current_stage = "sensitivity"
        rows = agreement_sensitivity(
            policy,
            real_view,
            cfg.sensitivity_sds,
            n_trials=cfg.sensitivity_trials,
            seed=derive_seed(cfg.seed, 104),
        )
        write_sensitivity_csv(rows, out / "sensitivity.csv")
        if cfg.figures:
            report.save_sensitivity_curve(rows, out / "sensitivity.png")
        _stage(
            "sensitivity",
            levels=len(rows),
            trials=cfg.sensitivity_trials,
            floor=f"{rows[-1].mean_agreement:.4f}",
        )

        # -- provenance ------------------------------------------------------
        (out / "config_resolved.json").write_text(
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        _stage("done", out_dir=str(out))
        return 0
    except TwinError:
        print(f"error in stage {current_stage}", file=sys.stderr)
        raise
    except OSError:
        print(f"error in stage {current_stage}", file=sys.stderr)
        raise


def _expand(values: np.ndarray, covered: np.ndarray) -> np.ndarray:
    """Scatter covered-zone values back to the full zone ordering."""
    if covered.all():
        return np.asarray(values, dtype=np.float64)
    out = np.full(len(covered), np.nan)
    out[covered] = values
    return out
