"""Procedural city generator used as the verification oracle.

Builds a jittered-grid zone map plus a feature table whose NO2 target is
spatially autocorrelated by construction:

    y = f(features) + rho * W f(features) + noise

where W is an internal row-standardized k-NN weight matrix computed here
from scratch (deliberately independent of the spatial module, so the two
can be tested against each other). Eight of the twenty static features
are smooth spatial fields; the rest are i.i.d. draws, which gives the
Moran cutoff something real to separate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import InvalidConfig
from .geo import FeatureTable, Point, Zone, ZoneSet, polygon_centroid

# Features built as kernel-smoothed random fields (high Moran's I).
SMOOTH_FEATURES = (
    "altitude",
    "dist_to_center",
    "building_density",
    "population_density",
    "road_density",
    "green_fraction",
    "income",
    "industrial_fraction",
)

# Features drawn i.i.d. per zone (Moran's I near its null expectation).
NOISE_FEATURES = (
    "dwelling_size",
    "parking_density",
    "bus_stop_density",
    "school_density",
    "retail_density",
    "office_density",
    "tourism_index",
    "heating_demand",
    "construction_activity",
    "noise_complaints",
    "waste_tonnage",
    "ev_charger_density",
)

ALL_FEATURES = SMOOTH_FEATURES + NOISE_FEATURES

# Standardized-feature coefficients of the ground-truth signal f.
DEFAULT_COEFFICIENTS: dict[str, float] = {
    "road_density": 3.0,
    "building_density": 2.4,
    "population_density": 1.8,
    "dist_to_center": -2.2,
    "industrial_fraction": 1.4,
    "green_fraction": -1.1,
    "altitude": -0.8,
    "retail_density": 0.9,
    "dwelling_size": -0.5,
}


@dataclass(frozen=True)
class CityConfig:
    """Generator knobs; everything is deterministic given ``seed``."""

    seed: int = 0
    n_zones: int = 100
    rho: float = 0.6
    noise_sd: float = 1.0
    cell_size_m: float = 500.0
    jitter: float = 0.35
    knn_k: int = 8
    target_mean: float = 12.8
    target_sd: float = 4.0
    interaction_coef: float = 0.8
    coefficients: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_zones < 4:
            raise InvalidConfig("n_zones must be >= 4")
        if not 0.0 <= self.rho <= 0.8:
            raise InvalidConfig("rho must lie in [0, 0.8]")
        if self.noise_sd < 0:
            raise InvalidConfig("noise_sd must be >= 0")
        if not 0.0 <= self.jitter < 0.5:
            raise InvalidConfig("jitter must lie in [0, 0.5)")
        unknown = set(self.coefficients) - set(ALL_FEATURES)
        if unknown:
            raise InvalidConfig(f"coefficient overrides for unknown features {sorted(unknown)}")

    def effective_coefficients(self) -> dict[str, float]:
        coefs = dict(DEFAULT_COEFFICIENTS)
        coefs.update(self.coefficients)
        return coefs


def city_config_from_dict(doc: Mapping) -> CityConfig:
    """Build a CityConfig from a parsed TOML/JSON document."""
    allowed = {f.name for f in fields(CityConfig)}
    unknown = set(doc) - allowed
    if unknown:
        raise InvalidConfig(f"unknown generator config keys {sorted(unknown)}")
    return CityConfig(**doc)


def load_city_config(path: str | Path) -> CityConfig:
    """Read a generator config file; .json parses as JSON, else TOML."""
    path = Path(path)
    raw = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(raw)
    else:
        doc = tomllib.loads(raw)
    return city_config_from_dict(doc)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def _grid_shape(n: int) -> tuple[int, int]:
    # largest divisor <= sqrt(n), so the grid tiles n exactly
    r = int(np.sqrt(n))
    while n % r != 0:
        r -= 1
    return r, n // r


def _jittered_lattice(rows: int, cols: int, d: float, jitter: float,
                      rng: np.random.Generator) -> np.ndarray:
    """(rows+1) x (cols+1) x 2 vertex lattice; boundary stays on the rectangle."""
    vx = np.arange(cols + 1)[None, :] * d * np.ones((rows + 1, 1))
    vy = np.arange(rows + 1)[:, None] * d * np.ones((1, cols + 1))
    amp = jitter * d
    jx = rng.uniform(-amp, amp, size=vx.shape)
    jy = rng.uniform(-amp, amp, size=vy.shape)
    # boundary vertices may only slide along their edge; corners are fixed
    jx[:, 0] = 0.0
    jx[:, -1] = 0.0
    jy[0, :] = 0.0
    jy[-1, :] = 0.0
    return np.stack([vx + jx, vy + jy], axis=-1)


def _knn_rows(centroids: np.ndarray, k: int) -> list[np.ndarray]:
    # brute force, ties by lower index; own tiny implementation on purpose
    n = len(centroids)
    diff = centroids[:, None, :] - centroids[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    rows = []
    for i in range(n):
        order = np.lexsort((np.arange(n), d2[i]))
        order = order[order != i]
        rows.append(np.sort(order[:k]))
    return rows


def _lag(rows: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    return np.array([x[r].mean() if len(r) else 0.0 for r in rows])


def _kernel_smooth(centroids: np.ndarray, v: np.ndarray, bandwidth: float) -> np.ndarray:
    diff = centroids[:, None, :] - centroids[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    k = np.exp(-d2 / (2.0 * bandwidth**2))
    return (k @ v) / k.sum(axis=1)


def _zscore(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    if sd == 0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def _smooth_field(centroids: np.ndarray, bandwidth: float,
                  rng: np.random.Generator) -> np.ndarray:
    return _zscore(_kernel_smooth(centroids, rng.normal(size=len(centroids)), bandwidth))


def generate_synthetic_city(
    seed: int, n_zones: int, params: CityConfig | None = None
) -> tuple[ZoneSet, FeatureTable]:
    """Deterministically generate a zone map and its feature table.

    The returned table's target is strictly positive, NO2-like in scale,
    and spatially autocorrelated with strength controlled by ``rho``.
    """
    if params is None:
        params = CityConfig(seed=seed, n_zones=n_zones)
    else:
        if params.seed != seed or params.n_zones != n_zones:
            params = CityConfig(
                **{
                    **params.__dict__,
                    "seed": seed,
                    "n_zones": n_zones,
                }
            )

    rows, cols = _grid_shape(params.n_zones)
    d = params.cell_size_m
    lattice = _jittered_lattice(rows, cols, d, params.jitter, _rng(seed, 0))

    zones: list[Zone] = []
    rings: list[tuple[Point, ...]] = []
    for r in range(rows):
        for c in range(cols):
            ring = (
                tuple(lattice[r, c]),
                tuple(lattice[r, c + 1]),
                tuple(lattice[r + 1, c + 1]),
                tuple(lattice[r + 1, c]),
                tuple(lattice[r, c]),
            )
            rings.append(ring)

    centroids = np.array([polygon_centroid(ring) for ring in rings])
    center = np.array([cols * d / 2.0, rows * d / 2.0])

    bw = 1.8 * d
    s = {name: _smooth_field(centroids, bw, _rng(seed, 10 + i))
         for i, name in enumerate(
             ("terrain", "built", "crowd", "roads", "parks", "wealth", "industry"))}

    cols_out: dict[str, np.ndarray] = {}
    dist = np.linalg.norm(centroids - center, axis=1)
    cols_out["dist_to_center"] = dist
    cols_out["altitude"] = 60.0 + 35.0 * s["terrain"] + 0.004 * centroids[:, 0]
    cols_out["building_density"] = np.exp(0.6 * s["built"] + 0.2 * s["crowd"]) * 0.85
    cols_out["population_density"] = 4200.0 * np.exp(0.5 * s["crowd"] + 0.3 * s["built"])
    cols_out["road_density"] = 8.0 + 2.8 * s["roads"] + 1.4 * s["built"]
    cols_out["green_fraction"] = 1.0 / (1.0 + np.exp(-(0.8 * s["parks"] - 0.3 * s["built"])))
    cols_out["income"] = 32000.0 + 9000.0 * s["wealth"] - 2500.0 * s["crowd"]
    cols_out["industrial_fraction"] = 1.0 / (
        1.0 + np.exp(-(0.9 * s["industry"] + 0.4 * s["roads"] - 0.2 * s["wealth"]))
    )

    noise_specs = {
        "dwelling_size": lambda g: g.normal(72.0, 14.0, params.n_zones),
        "parking_density": lambda g: g.gamma(3.0, 9.0, params.n_zones),
        "bus_stop_density": lambda g: g.poisson(6.0, params.n_zones) + g.uniform(0, 1, params.n_zones),
        "school_density": lambda g: g.uniform(0.2, 4.0, params.n_zones),
        "retail_density": lambda g: g.lognormal(2.0, 0.5, params.n_zones),
        "office_density": lambda g: g.lognormal(1.5, 0.7, params.n_zones),
        "tourism_index": lambda g: g.beta(2.0, 5.0, params.n_zones) * 100.0,
        "heating_demand": lambda g: g.normal(55.0, 9.0, params.n_zones),
        "construction_activity": lambda g: g.exponential(2.5, params.n_zones),
        "noise_complaints": lambda g: g.poisson(11.0, params.n_zones).astype(float),
        "waste_tonnage": lambda g: g.normal(140.0, 22.0, params.n_zones),
        "ev_charger_density": lambda g: g.exponential(1.2, params.n_zones),
    }
    for i, (name, draw) in enumerate(noise_specs.items()):
        cols_out[name] = np.asarray(draw(_rng(seed, 30 + i)), dtype=np.float64)

    coefs = params.effective_coefficients()
    f = np.zeros(params.n_zones)
    for name, coef in coefs.items():
        f += coef * _zscore(cols_out[name])
    f += params.interaction_coef * _zscore(cols_out["road_density"]) * _zscore(
        cols_out["building_density"]
    )

    knn = _knn_rows(centroids, min(params.knn_k, params.n_zones - 1))
    structured = f + params.rho * _lag(knn, f)
    eps = _rng(seed, 60).normal(0.0, params.noise_sd, params.n_zones)
    y = params.target_mean + params.target_sd * _zscore(structured) + eps
    y = np.maximum(y, 0.5)  # target must stay strictly positive

    for idx, ring in enumerate(rings):
        zid = f"Z{idx:04d}"
        feats = {name: float(cols_out[name][idx]) for name in ALL_FEATURES}
        zones.append(Zone(zid, ring, tuple(centroids[idx]), feats))

    zone_set = ZoneSet(tuple(zones), projection_origin=(0.0, 0.0))
    table = zone_set.feature_table(y=y)
    return zone_set, table
