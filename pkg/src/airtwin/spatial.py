"""Spatial weights, spatial lag and Moran's I with permutation inference.

Weights are stored as per-zone sparse rows. The Moran statistic follows
the classic cross-product form

    I = (N / S0) * sum_ij w_ij (x_i - xbar)(x_j - xbar) / sum_i (x_i - xbar)^2

with S0 the sum of all weights and expected value E[I] = -1/(N-1) under
the null. Significance comes from a two-sided permutation test with the
"+1" correction, deterministic for a given seed regardless of how the
permutations are scheduled (each permutation draws from its own stream).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateVariance,
    DimensionError,
    InvalidConfig,
    InvalidGeometry,
    ParseError,
)
from .geo import ZoneSet, polygon_area

SCHEMES = ("knn", "rook", "queen")


@dataclass(frozen=True)
class SpatialWeights:
    """Sparse row-wise spatial weight matrix W.

    Each row holds (neighbor index array, weight array) pairs. Rows may be
    empty (islands); self-neighbors are forbidden.
    """

    n: int
    rows: tuple[tuple[np.ndarray, np.ndarray], ...]
    scheme: str
    row_standardized: bool

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidConfig(f"unknown scheme {self.scheme!r}")
        if len(self.rows) != self.n:
            raise DimensionError("row count does not match n")
        for i, (idx, w) in enumerate(self.rows):
            if len(idx) != len(w):
                raise DimensionError(f"row {i}: index/weight length mismatch")
            if len(idx) == 0:
                continue
            if np.any(idx == i):
                raise InvalidConfig(f"row {i}: self-neighbor")
            if np.any((idx < 0) | (idx >= self.n)):
                raise InvalidConfig(f"row {i}: neighbor index out of range")
            if np.any(w < 0):
                raise InvalidConfig(f"row {i}: negative weight")
            if self.row_standardized and abs(w.sum() - 1.0) > 1e-12:
                raise InvalidConfig(f"row {i}: standardized row does not sum to 1")

    @cached_property
    def coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, w) triplet arrays over all nonzero entries."""
        ii, jj, ww = [], [], []
        for i, (idx, w) in enumerate(self.rows):
            ii.append(np.full(len(idx), i, dtype=np.int64))
            jj.append(idx.astype(np.int64))
            ww.append(w.astype(np.float64))
        if not ii:
            empty = np.array([], dtype=np.int64)
            return empty, empty, np.array([], dtype=np.float64)
        return np.concatenate(ii), np.concatenate(jj), np.concatenate(ww)

    @property
    def islands(self) -> tuple[int, ...]:
        return tuple(i for i, (idx, _) in enumerate(self.rows) if len(idx) == 0)

    @property
    def total_weight(self) -> float:
        return float(self.coo[2].sum())

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        i, j, w = self.coo
        out[i, j] = w
        return out


@dataclass(frozen=True)
class MoranResult:
    """Moran's I with optional permutation-based inference."""

    I: float
    expected_I: float
    z_score: float | None = None
    p_value: float | None = None
    n_permutations: int = 0

    def to_dict(self) -> dict:
        return {
            "I": self.I,
            "expected_I": self.expected_I,
            "z_score": self.z_score,
            "p_value": self.p_value,
            "n_permutations": self.n_permutations,
        }


def _centroids_of(zones: ZoneSet | np.ndarray) -> np.ndarray:
    if isinstance(zones, ZoneSet):
        return zones.centroids()
    pts = np.asarray(zones, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DimensionError("centroids must be an (n, 2) array")
    return pts


def build_knn_weights(zones: ZoneSet | np.ndarray, k: int) -> SpatialWeights:
    """Binary k-nearest-neighbor weights over zone centroids.

    Distance ties are broken by the lower zone index so results never
    depend on sort instability. Weights come back unstandardized.
    """
    pts = _centroids_of(zones)
    n = len(pts)
    if k < 1:
        raise InvalidConfig("k must be >= 1")
    if k >= n:
        raise InvalidConfig(f"k={k} must be < n={n}")
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    rows = []
    order_keys = np.arange(n)
    for i in range(n):
        order = np.lexsort((order_keys, d2[i]))
        order = order[order != i][:k]
        idx = np.sort(order)
        rows.append((idx.astype(np.int64), np.ones(k)))
    return SpatialWeights(n, tuple(rows), "knn", row_standardized=False)


def _quantize(v: float) -> int:
    # vertex equality within 1e-9 m
    return int(round(v * 1e9))


def build_contiguity_weights(zones: ZoneSet, mode: str) -> SpatialWeights:
    """Binary contiguity weights: rook shares an edge, queen a vertex."""
    if mode not in ("rook", "queen"):
        raise InvalidConfig(f"mode must be rook or queen, got {mode!r}")
    n = zones.n
    key_owners: dict[tuple, list[int]] = {}
    for zi, zone in enumerate(zones.zones):
        ring = zone.polygon
        if polygon_area(ring) <= 0.0:
            raise InvalidGeometry(f"zone {zone.zone_id}: zero-area polygon")
        verts = [(_quantize(x), _quantize(y)) for x, y in ring[:-1]]
        if len(set(verts)) != len(verts):
            raise InvalidGeometry(f"zone {zone.zone_id}: repeated vertex")
        if mode == "queen":
            keys = verts
        else:
            keys = [
                tuple(sorted((verts[i], verts[(i + 1) % len(verts)])))
                for i in range(len(verts))
            ]
        for key in keys:
            key_owners.setdefault(key, []).append(zi)

    neighbor_sets: list[set[int]] = [set() for _ in range(n)]
    for owners in key_owners.values():
        for a in owners:
            for b in owners:
                if a != b:
                    neighbor_sets[a].add(b)
    rows = []
    for i in range(n):
        idx = np.array(sorted(neighbor_sets[i]), dtype=np.int64)
        rows.append((idx, np.ones(len(idx))))
    return SpatialWeights(n, tuple(rows), mode, row_standardized=False)


def row_standardize(w: SpatialWeights) -> SpatialWeights:
    """Divide each nonempty row by its sum; islands stay empty.

    Idempotent; islands are reported via ``SpatialWeights.islands``.
    """
    rows = []
    for idx, wt in w.rows:
        if len(idx) == 0:
            rows.append((idx, wt))
        else:
            rows.append((idx, wt / wt.sum()))
    return SpatialWeights(w.n, tuple(rows), w.scheme, row_standardized=True)


def spatial_lag(w: SpatialWeights, x: np.ndarray) -> np.ndarray:
    """Weighted neighbor average W x; island rows lag to 0."""
    if not w.row_standardized:
        raise InvalidConfig("spatial_lag requires row-standardized weights")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (w.n,):
        raise DimensionError(f"x has length {len(x)}, weights expect {w.n}")
    i, j, wt = w.coo
    out = np.zeros(w.n)
    np.add.at(out, i, wt * x[j])
    return out


def _check_moran_input(w: SpatialWeights, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (w.n,):
        raise DimensionError(f"x has length {len(x)}, weights expect {w.n}")
    if w.n < 2:
        raise InvalidConfig("Moran's I needs at least 2 zones")
    if np.ptp(x) == 0.0:
        raise DegenerateVariance("x is constant")
    return x


def _moran_value(
    z: np.ndarray, i: np.ndarray, j: np.ndarray, wt: np.ndarray, scale: float
) -> float:
    return scale * float(np.dot(wt * z[i], z[j])) / float(np.dot(z, z))


def morans_i(w: SpatialWeights, x: np.ndarray) -> MoranResult:
    """Point estimate of global Moran's I (no inference)."""
    x = _check_moran_input(w, x)
    i, j, wt = w.coo
    z = x - x.mean()
    scale = w.n / float(wt.sum())
    return MoranResult(
        I=_moran_value(z, i, j, wt, scale),
        expected_I=-1.0 / (w.n - 1),
    )


def morans_permutation_test(
    w: SpatialWeights, x: np.ndarray, n_perm: int = 999, seed: int = 0
) -> MoranResult:
    """Two-sided permutation test for Moran's I.

    p = (1 + #{ |I* - E[I]| >= |I - E[I]| }) / (n_perm + 1). Each
    permutation uses an independent stream derived from (seed, index), so
    the result is reproducible under any execution order.
    """
    if n_perm < 99:
        raise InvalidConfig("n_perm must be >= 99")
    x = _check_moran_input(w, x)
    i, j, wt = w.coo
    z = x - x.mean()
    scale = w.n / float(wt.sum())
    observed = _moran_value(z, i, j, wt, scale)
    expected = -1.0 / (w.n - 1)

    sims = np.empty(n_perm)
    for p in range(n_perm):
        perm = np.random.default_rng([seed, p]).permutation(w.n)
        sims[p] = _moran_value(z[perm], i, j, wt, scale)

    exceed = int(np.sum(np.abs(sims - expected) >= abs(observed - expected)))
    p_value = (1.0 + exceed) / (n_perm + 1.0)
    sd = sims.std()
    z_score = (observed - sims.mean()) / sd if sd > 0 else float("inf")
    return MoranResult(
        I=observed,
        expected_I=expected,
        z_score=float(z_score),
        p_value=float(p_value),
        n_permutations=n_perm,
    )


# --- CSV triplet export/import -------------------------------------------


def save_weights_csv(w: SpatialWeights, path: str | Path) -> None:
    """Write `i,j,w` triplets preceded by a one-line JSON header."""
    header = {"n": w.n, "scheme": w.scheme, "standardized": w.row_standardized}
    with Path(path).open("w", newline="") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "w"])
        i, j, wt = w.coo
        for a, b, c in zip(i, j, wt):
            writer.writerow([int(a), int(b), repr(float(c))])


def load_weights_csv(path: str | Path) -> SpatialWeights:
    with Path(path).open(newline="") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
            n = int(header["n"])
            scheme = header["scheme"]
            standardized = bool(header["standardized"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad JSON header: {exc}", line=1) from None
        reader = csv.reader(fh)
        cols = next(reader, None)
        if cols != ["i", "j", "w"]:
            raise ParseError("expected i,j,w column header", line=2)
        per_row: dict[int, list[tuple[int, float]]] = {}
        for row in reader:
            if not row:
                continue
            try:
                i, j, wt = int(row[0]), int(row[1]), float(row[2])
            except (IndexError, ValueError) as exc:
                raise ParseError(f"malformed triplet: {exc}", line=reader.line_num) from None
            per_row.setdefault(i, []).append((j, wt))
    rows = []
    for i in range(n):
        entries = sorted(per_row.get(i, []))
        idx = np.array([j for j, _ in entries], dtype=np.int64)
        wt = np.array([v for _, v in entries], dtype=np.float64)
        rows.append((idx, wt))
    return SpatialWeights(n, tuple(rows), scheme, standardized)
