"""Discrete decision policies and the equality-of-decisions check.

A policy is a strictly increasing threshold ladder over zone values; the
decision for a value is the label of the interval it falls in, with
values exactly on a boundary taking the higher (more restrictive) label.
Agreement between decisions on real and synthetic views, together with
the separation margin to the nearest boundary, operationalizes the
"same decisions from synthetic data" condition, and the sensitivity
sweep maps how agreement decays as synthetic error grows relative to the
margins.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidConfig, InvalidInput, SchemaMismatch

SOURCES = ("real", "synthetic")


@dataclass(frozen=True)
class DecisionPolicy:
    policy_id: str
    thresholds: tuple[float, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.thresholds) < 1:
            raise InvalidConfig("policy needs at least one threshold")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise InvalidConfig("thresholds must be strictly increasing")
        if len(self.labels) != len(self.thresholds) + 1:
            raise InvalidConfig("need exactly len(thresholds) + 1 labels")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidConfig("labels must be unique")

    def to_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "thresholds": list(self.thresholds),
            "labels": list(self.labels),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc) -> "DecisionPolicy":
        return cls(
            str(doc.get("policy_id", "policy")),
            tuple(doc["thresholds"]),
            tuple(doc["labels"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "DecisionPolicy":
        return cls.from_dict(json.loads(Path(path).read_text()))


DEFAULT_POLICY = DecisionPolicy(
    "default-traffic",
    thresholds=(20.0, 40.0),
    labels=("no-restriction", "schedule-restriction", "truck-ban"),
)


@dataclass(frozen=True)
class TwinView:
    """Zone values as seen through the twin, tagged by their source."""

    zone_ids: tuple[str, ...]
    values: np.ndarray
    source: str

    def __post_init__(self):
        object.__setattr__(self, "zone_ids", tuple(self.zone_ids))
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if self.source not in SOURCES:
            raise InvalidInput(f"source must be one of {SOURCES}")
        if v.shape != (len(self.zone_ids),):
            raise SchemaMismatch("values length does not match zone_ids")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("twin view contains non-finite values")


def _label_indices(policy: DecisionPolicy, values: np.ndarray) -> np.ndarray:
    # boundary values take the higher-index (more restrictive) label
    return np.searchsorted(np.asarray(policy.thresholds), values, side="right")


def decide(policy: DecisionPolicy, view: TwinView) -> dict[str, str]:
    """Map each zone's value to its policy label."""
    idx = _label_indices(policy, view.values)
    return {z: policy.labels[i] for z, i in zip(view.zone_ids, idx)}


def separation_margin(
    policy: DecisionPolicy, view: TwinView
) -> tuple[dict[str, float], float]:
    """Distance from each value to the nearest threshold, plus the minimum."""
    t = np.asarray(policy.thresholds)
    margins = np.min(np.abs(view.values[:, None] - t[None, :]), axis=1)
    per_zone = {z: float(m) for z, m in zip(view.zone_ids, margins)}
    return per_zone, float(margins.min())


@dataclass(frozen=True)
class ZoneDecision:
    zone_id: str
    decision_real: str
    decision_synth: str
    agree: bool


@dataclass(frozen=True)
class DecisionReport:
    per_zone: tuple[ZoneDecision, ...]
    agreement_rate: float
    min_separation_real: float
    mean_margin: float

    def to_dict(self) -> dict:
        return {
            "per_zone": [
                {
                    "zone_id": d.zone_id,
                    "real": d.decision_real,
                    "synth": d.decision_synth,
                    "agree": d.agree,
                }
                for d in self.per_zone
            ],
            "agreement_rate": self.agreement_rate,
            "min_separation_real": self.min_separation_real,
            "mean_margin": self.mean_margin,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["zone_id", "real", "synth", "agree"])
            for d in self.per_zone:
                writer.writerow(
                    [d.zone_id, d.decision_real, d.decision_synth, str(d.agree).lower()]
                )


def equality_of_decisions(
    policy: DecisionPolicy, real: TwinView, synth: TwinView
) -> DecisionReport:
    """Zone-by-zone agreement between decisions on real and synthetic views."""
    if real.source != "real" or synth.source != "synthetic":
        raise InvalidInput("expected views tagged real and synthetic")
    if set(real.zone_ids) != set(synth.zone_ids):
        raise SchemaMismatch("real and synthetic views cover different zones")
    synth_map = dict(zip(synth.zone_ids, synth.values))
    synth_aligned = np.array([synth_map[z] for z in real.zone_ids])

    real_idx = _label_indices(policy, real.values)
    synth_idx = _label_indices(policy, synth_aligned)
    per_zone = tuple(
        ZoneDecision(z, policy.labels[a], policy.labels[b], bool(a == b))
        for z, a, b in zip(real.zone_ids, real_idx, synth_idx)
    )
    agree_count = int(sum(d.agree for d in per_zone))
    margins, min_margin = separation_margin(policy, real)
    return DecisionReport(
        per_zone=per_zone,
        agreement_rate=agree_count / len(per_zone),
        min_separation_real=min_margin,
        mean_margin=float(np.mean(list(margins.values()))),
    )


@dataclass(frozen=True)
class SensitivityRow:
    noise_sd: float
    mean_agreement: float
    sd_agreement: float


def agreement_sensitivity(
    policy: DecisionPolicy,
    real: TwinView,
    noise_sds: Sequence[float],
    n_trials: int = 1000,
    seed: int = 0,
) -> tuple[SensitivityRow, ...]:
    """Monte-Carlo agreement rates under additive Gaussian synthetic error.

    For each noise level, synthetic views are simulated as real + N(0, sd)
    per zone; each (level, trial) pair draws from its own stream so the
    sweep is reproducible under any execution order.
    """
    if n_trials < 100:
        raise InvalidConfig("n_trials must be >= 100")
    if any(sd < 0 for sd in noise_sds):
        raise InvalidConfig("noise sd must be >= 0")
    base_idx = _label_indices(policy, real.values)
    n = len(real.zone_ids)
    rows = []
    for si, sd in enumerate(noise_sds):
        rates = np.empty(n_trials)
        for t in range(n_trials):
            if sd == 0:
                rates[t] = 1.0
                continue
            noise = np.random.default_rng([seed, si, t]).normal(0.0, sd, n)
            idx = _label_indices(policy, real.values + noise)
            rates[t] = float(np.mean(idx == base_idx))
        rows.append(
            SensitivityRow(float(sd), float(rates.mean()), float(rates.std()))
        )
    return tuple(rows)


def write_sensitivity_csv(rows: Sequence[SensitivityRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["noise_sd", "mean_agreement", "sd_agreement"])
        for r in rows:
            writer.writerow([repr(r.noise_sd), repr(r.mean_agreement), repr(r.sd_agreement)])
