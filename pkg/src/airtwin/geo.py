"""Zone geometry, station measurements and the modeling table.

Coordinates are kept in a local planar frame (meters) obtained by an
equirectangular projection centered on a configurable origin. At city
scale (< 200 km) the distortion is negligible and the projection is
trivially invertible, which keeps round trips exact enough for tests.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    InvalidCoordinate,
    InvalidGeometry,
    NoData,
    ParseError,
    SchemaMismatch,
)

EARTH_RADIUS_M = 6_371_000.0

POLLUTANTS = ("NO2", "O3")

Point = tuple[float, float]


def _check_lat_lon(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise InvalidCoordinate(f"non-finite coordinate ({lat}, {lon})")
    if abs(lat) > 90.0:
        raise InvalidCoordinate(f"latitude {lat} outside [-90, 90]")
    if abs(lon) > 180.0:
        raise InvalidCoordinate(f"longitude {lon} outside [-180, 180]")


def project_to_planar(lat: float, lon: float, origin: Point) -> Point:
    """Project spherical degrees to local planar meters.

    Equirectangular projection centered at ``origin``: x scales longitude
    by cos(origin latitude), y scales latitude. The origin maps to (0, 0).
    """
    _check_lat_lon(lat, lon)
    lat0, lon0 = origin
    _check_lat_lon(lat0, lon0)
    x = EARTH_RADIUS_M * math.cos(math.radians(lat0)) * math.radians(lon - lon0)
    y = EARTH_RADIUS_M * math.radians(lat - lat0)
    return x, y


def inverse_project(x: float, y: float, origin: Point) -> Point:
    """Invert :func:`project_to_planar` back to (lat, lon) degrees."""
    lat0, lon0 = origin
    _check_lat_lon(lat0, lon0)
    lat = lat0 + math.degrees(y / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def point_in_polygon(x: float, y: float, ring: Sequence[Point]) -> bool:
    """Even-odd rule point-in-polygon test against a closed ring."""
    inside = False
    for i in range(len(ring) - 1):
        x1, y1 = ring[i]
        x2, y2 = ring[i + 1]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x_cross > x:
                inside = not inside
    return inside


def polygon_area(ring: Sequence[Point]) -> float:
    """Unsigned shoelace area of a closed ring."""
    acc = 0.0
    for i in range(len(ring) - 1):
        x1, y1 = ring[i]
        x2, y2 = ring[i + 1]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def polygon_centroid(ring: Sequence[Point]) -> Point:
    """Area centroid of a simple closed ring (falls back to vertex mean)."""
    a = 0.0
    cx = 0.0
    cy = 0.0
    for i in range(len(ring) - 1):
        x1, y1 = ring[i]
        x2, y2 = ring[i + 1]
        cross = x1 * y2 - x2 * y1
        a += cross
        cx += (x1 + x2) * cross
        cy += (y1 + y2) * cross
    if a == 0.0:
        xs = [p[0] for p in ring[:-1]]
        ys = [p[1] for p in ring[:-1]]
        return sum(xs) / len(xs), sum(ys) / len(ys)
    return cx / (3.0 * a), cy / (3.0 * a)


@dataclass(frozen=True)
class Zone:
    """One city district: a closed planar ring plus static features."""

    zone_id: str
    polygon: tuple[Point, ...]
    centroid: Point
    features: Mapping[str, float]

    def __post_init__(self):
        ring = self.polygon
        if len(ring) < 4:
            raise InvalidGeometry(f"zone {self.zone_id}: ring needs >= 4 vertices")
        if ring[0] != ring[-1]:
            raise InvalidGeometry(f"zone {self.zone_id}: ring is not closed")
        xs = [p[0] for p in ring]
        ys = [p[1] for p in ring]
        cx, cy = self.centroid
        if not (min(xs) <= cx <= max(xs) and min(ys) <= cy <= max(ys)):
            raise InvalidGeometry(f"zone {self.zone_id}: centroid outside bounding box")


@dataclass(frozen=True)
class ZoneSet:
    """Immutable collection of zones sharing one feature schema."""

    zones: tuple[Zone, ...]
    projection_origin: Point = (0.0, 0.0)

    def __post_init__(self):
        ids = [z.zone_id for z in self.zones]
        if len(set(ids)) != len(ids):
            raise InvalidGeometry("duplicate zone_id")
        if self.zones:
            names = set(self.zones[0].features)
            for z in self.zones[1:]:
                if set(z.features) != names:
                    raise SchemaMismatch(
                        f"zone {z.zone_id} carries a different feature set"
                    )

    @property
    def n(self) -> int:
        return len(self.zones)

    @property
    def zone_ids(self) -> tuple[str, ...]:
        return tuple(z.zone_id for z in self.zones)

    @property
    def feature_names(self) -> tuple[str, ...]:
        if not self.zones:
            return ()
        return tuple(sorted(self.zones[0].features))

    def centroids(self) -> np.ndarray:
        return np.array([z.centroid for z in self.zones], dtype=np.float64)

    def feature_table(self, y: np.ndarray | None = None) -> "FeatureTable":
        names = self.feature_names
        x = np.array(
            [[z.features[name] for name in names] for z in self.zones],
            dtype=np.float64,
        )
        return FeatureTable(self.zone_ids, names, x, y)


@dataclass(frozen=True)
class StationMeasurement:
    """One pollutant reading from a fixed station."""

    station_id: str
    lat: float
    lon: float
    altitude: float
    pollutant: str
    value: float
    t_start: datetime
    t_end: datetime

    def __post_init__(self):
        _check_lat_lon(self.lat, self.lon)
        if self.pollutant not in POLLUTANTS:
            raise ParseError(f"unknown pollutant {self.pollutant!r}")
        if self.value < 0:
            raise ParseError(f"negative value {self.value}")
        if not self.t_start < self.t_end:
            raise ParseError("t_start must precede t_end")


@dataclass(frozen=True)
class FeatureTable:
    """Zones-by-features matrix plus the optional NO2 target column."""

    zone_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "zone_ids", tuple(self.zone_ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        x = np.asarray(self.X, dtype=np.float64)
        object.__setattr__(self, "X", x)
        if x.ndim != 2 or x.shape != (len(self.zone_ids), len(self.feature_names)):
            raise SchemaMismatch(
                f"X shape {x.shape} does not match "
                f"{len(self.zone_ids)} zones x {len(self.feature_names)} features"
            )
        if len(set(self.zone_ids)) != len(self.zone_ids):
            raise SchemaMismatch("duplicate zone_id")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaMismatch("duplicate feature name")
        if not np.all(np.isfinite(x)):
            raise SchemaMismatch("feature matrix contains missing or non-finite entries")
        if self.y is not None:
            yv = np.asarray(self.y, dtype=np.float64)
            object.__setattr__(self, "y", yv)
            if yv.shape != (len(self.zone_ids),):
                raise SchemaMismatch("target length does not match zone count")
            if not np.all(np.isfinite(yv)):
                raise SchemaMismatch("target contains missing or non-finite entries")

    @property
    def n(self) -> int:
        return len(self.zone_ids)

    def index_of(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise SchemaMismatch(f"unknown feature {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.index_of(name)].copy()

    def with_target(self, y: np.ndarray) -> "FeatureTable":
        return FeatureTable(self.zone_ids, self.feature_names, self.X, y)

    def with_columns(self, names: Sequence[str], columns: np.ndarray) -> "FeatureTable":
        cols = np.asarray(columns, dtype=np.float64)
        if cols.ndim == 1:
            cols = cols[:, None]
        return FeatureTable(
            self.zone_ids,
            self.feature_names + tuple(names),
            np.hstack([self.X, cols]),
            self.y,
        )

    def select(self, names: Sequence[str]) -> "FeatureTable":
        idx = [self.index_of(n) for n in names]
        return FeatureTable(self.zone_ids, tuple(names), self.X[:, idx], self.y)

    def drop(self, names: Sequence[str]) -> "FeatureTable":
        keep = [n for n in self.feature_names if n not in set(names)]
        return self.select(keep)

    def subset_rows(self, mask: np.ndarray) -> "FeatureTable":
        ids = tuple(z for z, m in zip(self.zone_ids, mask) if m)
        y = self.y[mask] if self.y is not None else None
        return FeatureTable(ids, self.feature_names, self.X[mask], y)


@dataclass(frozen=True)
class AggregationResult:
    """Per-zone aggregated target; zones without stations carry NaN."""

    values: np.ndarray
    covered: np.ndarray
    missing_zone_ids: tuple[str, ...]
    n_measurements_used: int
    n_outside: int


def aggregate_stations_to_zones(
    measurements: Sequence[StationMeasurement],
    zones: ZoneSet,
    pollutant: str,
    window: tuple[datetime, datetime],
) -> AggregationResult:
    """Mean in-window station values per zone (point-in-polygon assignment).

    A measurement is in-window when its whole [t_start, t_end] interval
    lies inside ``window``. Zones with no station are flagged, not errors.
    """
    if not measurements:
        raise NoData("no measurements supplied")
    w0, w1 = window
    selected = [
        m
        for m in measurements
        if m.pollutant == pollutant and m.t_start >= w0 and m.t_end <= w1
    ]
    if not selected:
        raise NoData(f"no {pollutant} measurements inside the window")

    sums = np.zeros(zones.n)
    counts = np.zeros(zones.n, dtype=np.int64)
    outside = 0
    for m in selected:
        px, py = project_to_planar(m.lat, m.lon, zones.projection_origin)
        for zi, zone in enumerate(zones.zones):
            if point_in_polygon(px, py, zone.polygon):
                sums[zi] += m.value
                counts[zi] += 1
                break
        else:
            outside += 1

    covered = counts > 0
    values = np.full(zones.n, np.nan)
    values[covered] = sums[covered] / counts[covered]
    missing = tuple(z.zone_id for z, c in zip(zones.zones, covered) if not c)
    return AggregationResult(values, covered, missing, int(counts.sum()), outside)


EEA_COLUMNS = (
    "station_id",
    "lat",
    "lon",
    "altitude",
    "pollutant",
    "value",
    "t_start",
    "t_end",
)


@dataclass(frozen=True)
class EeaLoadResult:
    measurements: tuple[StationMeasurement, ...]
    dropped_negative: int
    skipped_pollutant: int


def load_eea_csv(path: str | Path, pollutant: str | None = None) -> EeaLoadResult:
    """Parse an EEA-style station CSV.

    Rows with negative values are dropped and counted; rows with an
    unknown pollutant code are skipped and counted; anything else
    malformed raises :class:`ParseError` with its line number.
    """
    path = Path(path)
    measurements: list[StationMeasurement] = []
    dropped = 0
    skipped = 0
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty file", line=1)
        missing_cols = set(EEA_COLUMNS) - set(reader.fieldnames)
        if missing_cols:
            raise ParseError(f"missing columns {sorted(missing_cols)}", line=1)
        for row in reader:
            line = reader.line_num
            try:
                code = (row["pollutant"] or "").strip()
                if code not in POLLUTANTS:
                    skipped += 1
                    continue
                value = float(row["value"])
                if value < 0:
                    dropped += 1
                    continue
                m = StationMeasurement(
                    station_id=row["station_id"].strip(),
                    lat=float(row["lat"]),
                    lon=float(row["lon"]),
                    altitude=float(row["altitude"]),
                    pollutant=code,
                    value=value,
                    t_start=datetime.fromisoformat(row["t_start"]),
                    t_end=datetime.fromisoformat(row["t_end"]),
                )
            except ParseError as exc:
                raise ParseError(str(exc), line=line) from None
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed row: {exc}", line=line) from None
            if pollutant is None or m.pollutant == pollutant:
                measurements.append(m)
    return EeaLoadResult(tuple(measurements), dropped, skipped)


# --- GeoJSON in/out -------------------------------------------------------

PLANAR_MARKER = "planar_meters"
LONLAT_MARKER = "lonlat_degrees"


def zones_to_geojson(
    zones: ZoneSet,
    extra_properties: Mapping[str, Mapping[str, float]] | None = None,
) -> dict:
    """Zones as a GeoJSON FeatureCollection in the local planar frame.

    ``extra_properties`` maps zone_id -> extra numeric properties (e.g.
    predictions) merged into each feature's properties.
    """
    features = []
    for z in zones.zones:
        props: dict = {"zone_id": z.zone_id}
        props.update({k: float(v) for k, v in sorted(z.features.items())})
        if extra_properties and z.zone_id in extra_properties:
            props.update(
                {k: float(v) for k, v in extra_properties[z.zone_id].items()}
            )
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[list(p) for p in z.polygon]],
                },
                "properties": props,
            }
        )
    return {
        "type": "FeatureCollection",
        "coordinates": PLANAR_MARKER,
        "projection_origin": list(zones.projection_origin),
        "features": features,
    }


def zones_from_geojson(
    source: str | Path | dict, origin: Point | None = None
) -> ZoneSet:
    """Load a ZoneSet from a GeoJSON FeatureCollection.

    Coordinates are taken as planar meters when the collection carries the
    ``planar_meters`` marker written by :func:`zones_to_geojson`; otherwise
    they are treated as (lon, lat) degrees and projected around ``origin``
    (default: mean of all vertices).
    """
    if isinstance(source, (str, Path)):
        with Path(source).open() as fh:
            doc = json.load(fh)
    else:
        doc = source
    if doc.get("type") != "FeatureCollection":
        raise ParseError("expected a GeoJSON FeatureCollection")
    planar = doc.get("coordinates") == PLANAR_MARKER

    feats = doc.get("features", [])
    if not feats:
        raise NoData("FeatureCollection has no features")

    if planar:
        proj_origin = tuple(doc.get("projection_origin", (0.0, 0.0)))
    elif origin is not None:
        proj_origin = origin
    else:
        lats, lons = [], []
        for f in feats:
            for ring in f["geometry"]["coordinates"]:
                for lon, lat in ring:
                    lats.append(lat)
                    lons.append(lon)
        proj_origin = (sum(lats) / len(lats), sum(lons) / len(lons))

    zone_list = []
    for f in feats:
        props = dict(f.get("properties", {}))
        if "zone_id" not in props:
            raise ParseError("feature missing properties.zone_id")
        zone_id = str(props.pop("zone_id"))
        geom = f.get("geometry", {})
        if geom.get("type") != "Polygon":
            raise InvalidGeometry(f"zone {zone_id}: only Polygon geometry supported")
        ring_raw = geom["coordinates"][0]
        if planar:
            ring = [(float(x), float(y)) for x, y in ring_raw]
        else:
            ring = [
                project_to_planar(lat, lon, proj_origin) for lon, lat in ring_raw
            ]
        if ring[0] != ring[-1]:
            ring.append(ring[0])
        features = {
            k: float(v) for k, v in props.items() if isinstance(v, (int, float))
        }
        zone_list.append(
            Zone(zone_id, tuple(ring), polygon_centroid(ring), features)
        )
    return ZoneSet(tuple(zone_list), proj_origin)


# --- FeatureTable CSV -----------------------------------------------------

TARGET_COLUMN = "no2"


def write_table_csv(table: FeatureTable, path: str | Path) -> None:
    """Write a FeatureTable as zone_id,<features...>[,no2] CSV."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["zone_id", *table.feature_names]
        if table.y is not None:
            header.append(TARGET_COLUMN)
        writer.writerow(header)
        for i, zid in enumerate(table.zone_ids):
            row = [zid] + [repr(float(v)) for v in table.X[i]]
            if table.y is not None:
                row.append(repr(float(table.y[i])))
            writer.writerow(row)


def read_table_csv(path: str | Path) -> FeatureTable:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if not header or header[0] != "zone_id":
            raise ParseError("first column must be zone_id", line=1)
        has_y = header[-1] == TARGET_COLUMN
        names = tuple(header[1:-1] if has_y else header[1:])
        ids, rows, ys = [], [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(f"malformed row: {exc}", line=reader.line_num) from None
            if has_y:
                ys.append(vals[-1])
                vals = vals[:-1]
            rows.append(vals)
    y = np.array(ys) if has_y else None
    return FeatureTable(tuple(ids), names, np.array(rows, dtype=np.float64), y)


def read_value_csv(path: str | Path) -> dict[str, float]:
    """Read a zone_id,value CSV into an ordered mapping."""
    out: dict[str, float] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", line=1)
        for row in reader:
            if not row:
                continue
            try:
                out[row[0]] = float(row[1])
            except (IndexError, ValueError) as exc:
                raise ParseError(f"malformed row: {exc}", line=reader.line_num) from None
    return out


def write_value_csv(
    zone_ids: Iterable[str], values: Iterable[float], path: str | Path
) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zone_id", "value"])
        for zid, v in zip(zone_ids, values):
            writer.writerow([zid, repr(float(v))])
