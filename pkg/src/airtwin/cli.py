"""Command-line front door.

Exit codes: 0 ok, 2 data/config problems (missing files, parse errors),
64 usage errors, 70 unexpected internal failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from dataclasses import replace

from .citygen import CityConfig, generate_synthetic_city, load_city_config
from .decision import (
    DEFAULT_POLICY,
    DecisionPolicy,
    TwinView,
    equality_of_decisions,
    agreement_sensitivity,
    write_sensitivity_csv,
)
from .errors import InvalidConfig, NoData, ParseError, TwinError
from .features import FeatureCatalog, augment_with_lags
from .geo import (
    aggregate_stations_to_zones,
    load_eea_csv,
    read_table_csv,
    read_value_csv,
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
    eval_report_to_json,
    fit_gbt,
    fit_random_forest,
    model_from_json,
    model_to_json,
)
from .pipeline import load_config, run_pipeline
from .spatial import (
    build_contiguity_weights,
    build_knn_weights,
    load_weights_csv,
    morans_permutation_test,
    row_standardize,
    save_weights_csv,
)
from .synth import Scenario, generate_synthetic

EXIT_OK = 0
EXIT_IO = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 64, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _parse_set(values: list[str]) -> dict:
    """Parse repeated --set dotted.key=json_value overrides."""
    out: dict = {}
    for item in values:
        if "=" not in item:
            raise InvalidConfig(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def _load_model(path: str):
    return model_from_json(Path(path).read_text())


def _read_view(path: str, source: str) -> TwinView:
    mapping = read_value_csv(path)
    return TwinView(tuple(mapping), np.array(list(mapping.values())), source)


def _load_weights_for(args) -> "object":
    if getattr(args, "weights", None):
        w = load_weights_csv(args.weights)
        return w if w.row_standardized else row_standardize(w)
    zones = zones_from_geojson(args.zones)
    if args.scheme == "knn":
        w = build_knn_weights(zones, args.k)
    else:
        w = build_contiguity_weights(zones, args.scheme)
    return row_standardize(w)


def build_parser() -> _Parser:
    parser = _Parser(prog="airtwin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[], help="run the full pipeline")
    run.add_argument("--config", help="TOML pipeline config")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key (JSON value, dotted path)")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--threads", type=int)

    gen = sub.add_parser("generate-city", help="write a procedural verification city")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--zones", type=int, default=100)
    gen.add_argument("--rho", type=float, default=0.6)
    gen.add_argument("--noise-sd", type=float, default=1.0)
    gen.add_argument("--config", help="generator config file (TOML or JSON)")
    gen.add_argument("--out", required=True, help="output directory")

    ing = sub.add_parser("ingest", help="aggregate station CSV onto zones")
    ing.add_argument("--zones", required=True, help="zones GeoJSON")
    ing.add_argument("--eea", required=True, help="EEA-style station CSV")
    ing.add_argument("--pollutant", default="NO2", choices=["NO2", "O3"])
    ing.add_argument("--window-start", required=True)
    ing.add_argument("--window-end", required=True)
    ing.add_argument("--out", required=True, help="output table CSV")
    ing.add_argument("--seed", type=int, default=0,
                     help="accepted for uniformity; ingestion is deterministic")

    wgt = sub.add_parser("weights", help="build spatial weights from zones")
    wgt.add_argument("--zones", required=True)
    wgt.add_argument("--scheme", default="knn", choices=["knn", "rook", "queen"])
    wgt.add_argument("--k", type=int, default=8)
    wgt.add_argument("--standardize", action="store_true", default=True)
    wgt.add_argument("--out", required=True)
    wgt.add_argument("--seed", type=int, default=0,
                     help="accepted for uniformity; weights are deterministic")

    mor = sub.add_parser("moran", help="Moran's I for one feature or the target")
    mor.add_argument("--table", required=True)
    group = mor.add_mutually_exclusive_group(required=True)
    group.add_argument("--feature")
    group.add_argument("--target", action="store_true")
    mor.add_argument("--weights", help="weights CSV (else computed from --zones)")
    mor.add_argument("--zones")
    mor.add_argument("--scheme", default="knn", choices=["knn", "rook", "queen"])
    mor.add_argument("--k", type=int, default=8)
    mor.add_argument("--permutations", type=int, default=999)
    mor.add_argument("--seed", type=int, default=0)
    mor.add_argument("--out", help="write the result as JSON")

    aug = sub.add_parser("augment", help="append Moran-gated lag columns")
    aug.add_argument("--table", required=True)
    aug.add_argument("--weights", required=True)
    aug.add_argument("--cutoff", type=float, default=0.6)
    aug.add_argument("--out", required=True, help="output table CSV")
    aug.add_argument("--catalog", help="output catalog JSON")
    aug.add_argument("--seed", type=int, default=0,
                     help="accepted for uniformity; augmentation is deterministic")

    trn = sub.add_parser("train", help="fit a model on a table")
    trn.add_argument("--table", required=True)
    trn.add_argument("--model", default="gbt", choices=["rf", "gbt"])
    trn.add_argument("--trees", type=int)
    trn.add_argument("--max-depth", type=int)
    trn.add_argument("--learning-rate", type=float)
    trn.add_argument("--min-samples-leaf", type=int)
    trn.add_argument("--seed", type=int, default=0)
    trn.add_argument("--out", required=True, help="output model JSON")

    ev = sub.add_parser("evaluate", help="cross-validate a model spec on a table")
    ev.add_argument("--table", required=True)
    ev.add_argument("--model", default="gbt", choices=["rf", "gbt"])
    ev.add_argument("--trees", type=int)
    ev.add_argument("--max-depth", type=int)
    ev.add_argument("--learning-rate", type=float)
    ev.add_argument("--min-samples-leaf", type=int)
    ev.add_argument("--cv-k", type=int, default=10)
    ev.add_argument("--seed", type=int, default=42)
    ev.add_argument("--out", help="output eval report JSON")

    syn = sub.add_parser("synth", help="generate synthetic measurements")
    syn.add_argument("--model", required=True)
    syn.add_argument("--table", required=True)
    syn.add_argument("--scenario", help="scenario JSON")
    syn.add_argument("--weights", help="weights CSV for lag recomputation")
    syn.add_argument("--catalog", help="catalog JSON for lag recomputation")
    syn.add_argument("--out", required=True, help="output CSV (sidecar JSON next to it)")

    dec = sub.add_parser("decide", help="equality of decisions real vs synthetic")
    dec.add_argument("--policy", help="policy JSON (default: built-in demo policy)")
    dec.add_argument("--real", required=True, help="zone_id,value CSV")
    dec.add_argument("--synth", required=True, help="zone_id,value CSV")
    dec.add_argument("--out", help="output decisions CSV")
    dec.add_argument("--seed", type=int, default=0,
                     help="accepted for uniformity; decisions are deterministic")

    sen = sub.add_parser("sensitivity", help="agreement vs synthetic noise sweep")
    sen.add_argument("--policy", help="policy JSON (default: built-in demo policy)")
    sen.add_argument("--real", required=True)
    sen.add_argument("--sds", default="0,0.5,1,2,4", help="comma-separated noise sds")
    sen.add_argument("--trials", type=int, default=1000)
    sen.add_argument("--seed", type=int, default=0)
    sen.add_argument("--out", required=True)

    srv = sub.add_parser("serve", help="serve a pipeline output dir over HTTP")
    srv.add_argument(
        "--snapshot",
        default=os.environ.get("AIRTWIN_SNAPSHOT"),
        help="pipeline output directory (env: AIRTWIN_SNAPSHOT)",
    )
    srv.add_argument("--host", default=os.environ.get("AIRTWIN_HOST", "127.0.0.1"))
    srv.add_argument(
        "--port", type=int, default=int(os.environ.get("AIRTWIN_PORT", "8113"))
    )
    srv.add_argument(
        "--cors-origin",
        action="append",
        default=(
            os.environ["AIRTWIN_CORS_ORIGIN"].split(",")
            if "AIRTWIN_CORS_ORIGIN" in os.environ
            else []
        ),
        help="allowed UI origin, repeatable (env: AIRTWIN_CORS_ORIGIN, comma-separated)",
    )

    return parser


def _cmd_run(args) -> int:
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    cfg = load_config(args.config, overrides)
    return run_pipeline(cfg)


def _cmd_generate_city(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.config:
        # the file carries the full generator config; --seed still applies
        cfg = replace(load_city_config(args.config), seed=args.seed)
    else:
        cfg = CityConfig(
            seed=args.seed, n_zones=args.zones, rho=args.rho, noise_sd=args.noise_sd
        )
    zones, table = generate_synthetic_city(cfg.seed, cfg.n_zones, cfg)
    (out / "zones.geojson").write_text(
        json.dumps(zones_to_geojson(zones), sort_keys=True) + "\n"
    )
    write_table_csv(table, out / "table.csv")
    write_value_csv(table.zone_ids, table.y, out / "real.csv")
    print(
        f"stage=generate-city seed={cfg.seed} n_zones={zones.n} "
        f"features={len(table.feature_names)} out={out}"
    )
    return EXIT_OK


def _cmd_ingest(args) -> int:
    zones = zones_from_geojson(args.zones)
    result = load_eea_csv(args.eea, pollutant=args.pollutant)
    window = (
        datetime.fromisoformat(args.window_start),
        datetime.fromisoformat(args.window_end),
    )
    agg = aggregate_stations_to_zones(
        list(result.measurements), zones, args.pollutant, window
    )
    static = zones.feature_table()
    covered_table = static.subset_rows(agg.covered).with_target(agg.values[agg.covered])
    write_table_csv(covered_table, args.out)
    print(
        f"stage=ingest n_zones={zones.n} covered={int(agg.covered.sum())} "
        f"missing={len(agg.missing_zone_ids)} dropped_negative={result.dropped_negative} "
        f"skipped_pollutant={result.skipped_pollutant} out={args.out}"
    )
    if agg.missing_zone_ids:
        print(f"zones_without_stations={','.join(agg.missing_zone_ids)}")
    return EXIT_OK


def _cmd_weights(args) -> int:
    zones = zones_from_geojson(args.zones)
    if args.scheme == "knn":
        w = build_knn_weights(zones, args.k)
    else:
        w = build_contiguity_weights(zones, args.scheme)
    w = row_standardize(w)
    save_weights_csv(w, args.out)
    print(
        f"stage=weights scheme={args.scheme} k={args.k} n={w.n} "
        f"islands={len(w.islands)} out={args.out}"
    )
    return EXIT_OK


def _cmd_moran(args) -> int:
    table = read_table_csv(args.table)
    if args.target:
        if table.y is None:
            raise NoData("table has no target column")
        x = table.y
        name = "target"
    else:
        x = table.column(args.feature)
        name = args.feature
    if args.weights:
        w = load_weights_csv(args.weights)
        w = w if w.row_standardized else row_standardize(w)
    elif args.zones:
        w = _load_weights_for(args)
    else:
        raise InvalidConfig("need --weights or --zones")
    result = morans_permutation_test(w, x, n_perm=args.permutations, seed=args.seed)
    print(
        f"feature={name} I={result.I!r} expected_I={result.expected_I!r} "
        f"z={result.z_score!r} p_value={result.p_value!r} "
        f"n_permutations={result.n_permutations}"
    )
    if args.out:
        doc = result.to_dict()
        doc["feature"] = name
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def _cmd_augment(args) -> int:
    table = read_table_csv(args.table)
    w = load_weights_csv(args.weights)
    if not w.row_standardized:
        w = row_standardize(w)
    augmented, catalog = augment_with_lags(table, w, cutoff=args.cutoff)
    write_table_csv(augmented, args.out)
    if args.catalog:
        Path(args.catalog).write_text(catalog.to_json())
    lagged = sum(1 for e in catalog.entries if e.source == "lagged")
    print(
        f"stage=augment cutoff={args.cutoff} lagged={lagged} "
        f"columns={len(augmented.feature_names)} out={args.out}"
    )
    return EXIT_OK


def _model_spec(args):
    if args.model == "rf":
        spec = ForestParams(seed=args.seed)
        if args.trees:
            spec = ForestParams(
                n_trees=args.trees,
                max_depth=args.max_depth,
                min_samples_leaf=args.min_samples_leaf or 1,
                seed=args.seed,
            )
        return spec
    kwargs = {"seed": args.seed}
    if args.trees:
        kwargs["n_trees"] = args.trees
    if args.max_depth:
        kwargs["max_depth"] = args.max_depth
    if args.learning_rate:
        kwargs["learning_rate"] = args.learning_rate
    if args.min_samples_leaf:
        kwargs["min_samples_leaf"] = args.min_samples_leaf
    return GbtParams(**kwargs)


def _cmd_train(args) -> int:
    table = read_table_csv(args.table)
    spec = _model_spec(args)
    if isinstance(spec, ForestParams):
        model = fit_random_forest(table, spec)
    else:
        model = fit_gbt(table, spec)
    Path(args.out).write_text(model_to_json(model) + "\n")
    print(
        f"stage=train kind={model.kind} trees={len(model.trees)} "
        f"features={len(model.feature_names)} out={args.out}"
    )
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    table = read_table_csv(args.table)
    spec = _model_spec(args)
    rep = cross_validate(table, spec, CvConfig(k=args.cv_k, seed=args.seed))
    text = eval_report_to_json(rep)
    if args.out:
        Path(args.out).write_text(text)
    print(
        f"stage=evaluate model={args.model} accuracy={rep.accuracy_pct:.6f} "
        f"std={rep.accuracy_std_pct:.6f} mean_target={rep.mean_target:.6f} "
        f"error_range=[{rep.error_range[0]:.6f},{rep.error_range[1]:.6f}]"
    )
    return EXIT_OK


def _cmd_synth(args) -> int:
    model = _load_model(args.model)
    table = read_table_csv(args.table)
    scenario = Scenario.load(args.scenario) if args.scenario else None
    weights = catalog = None
    if args.weights and args.catalog:
        weights = load_weights_csv(args.weights)
        if not weights.row_standardized:
            weights = row_standardize(weights)
        catalog = FeatureCatalog.load(args.catalog)
    dataset = generate_synthetic(model, table, scenario, weights, catalog)
    out = Path(args.out)
    dataset.write(out, out.with_name(out.stem + "_provenance.json"))
    print(
        f"stage=synth scenario={dataset.scenario_id} zones={len(dataset.zone_ids)} "
        f"model_version={dataset.model_version[:12]} out={args.out}"
    )
    return EXIT_OK


def _cmd_decide(args) -> int:
    policy = DecisionPolicy.load(args.policy) if args.policy else DEFAULT_POLICY
    real = _read_view(args.real, "real")
    synth = _read_view(args.synth, "synthetic")
    report = equality_of_decisions(policy, real, synth)
    if args.out:
        report.write_csv(args.out)
    print(
        f"stage=decide policy={policy.policy_id} agreement_rate={report.agreement_rate!r} "
        f"min_separation={report.min_separation_real!r} mean_margin={report.mean_margin!r}"
    )
    return EXIT_OK


def _cmd_sensitivity(args) -> int:
    policy = DecisionPolicy.load(args.policy) if args.policy else DEFAULT_POLICY
    real = _read_view(args.real, "real")
    sds = [float(s) for s in args.sds.split(",") if s.strip()]
    rows = agreement_sensitivity(policy, real, sds, n_trials=args.trials, seed=args.seed)
    write_sensitivity_csv(rows, args.out)
    for r in rows:
        print(
            f"stage=sensitivity sd={r.noise_sd!r} mean_agreement={r.mean_agreement!r} "
            f"sd_agreement={r.sd_agreement!r}"
        )
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    if not args.snapshot:
        raise InvalidConfig("serve needs --snapshot (or AIRTWIN_SNAPSHOT)")
    app = create_app(snapshot_dir=args.snapshot, cors_origins=args.cors_origin or None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "generate-city": _cmd_generate_city,
    "ingest": _cmd_ingest,
    "weights": _cmd_weights,
    "moran": _cmd_moran,
    "augment": _cmd_augment,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
    "decide": _cmd_decide,
    "sensitivity": _cmd_sensitivity,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"airtwin: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_IO
    except (ParseError, NoData, OSError) as exc:
        print(f"airtwin: {exc}", file=sys.stderr)
        return EXIT_IO
    except TwinError as exc:
        print(f"airtwin: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"airtwin: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
