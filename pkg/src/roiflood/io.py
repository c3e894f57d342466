"""
Delimiter-separated text I/O.

Two input tables: catchment attributes (one row per station) and annual
maxima (one row per station-year). Coordinates are in a projected planar
system, in metres. Output tables carry a one-line header followed by rows.
"""

from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
import os
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import ParseError, SchemaError
from .station import DEFAULT_ATTRIBUTES, Station

log = logging.getLogger(__name__)

STATION_COLUMNS = ("station_id", "centroid_x", "centroid_y") + DEFAULT_ATTRIBUTES
MAXIMA_COLUMNS = ("station_id", "year", "annual_max_m3s")
# attributes that real datasets carry but the model does not use
IGNORED_COLUMNS = (
    "avg_slope_deg",
    "density_km_per_km2",
    "agriculture_pct",
    "forest_pct",
    "rock_pct",
)
CONFIG_ENV = "ROIFLOOD_CONFIG"


class StationRow(NamedTuple):
    station_id: str
    centroid_x: float
    centroid_y: float
    size_km2: float
    altitude_m: float
    mean_daily_precip_mm: float
    mean_annmax_precip_mm: float


class MaximaRow(NamedTuple):
    station_id: str
    year: int
    annual_max_m3s: float


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _float(row_no, col, text, positive):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(row_no, col, f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(row_no, col, "value must be finite")
    if positive and not v > 0:
        raise ParseError(row_no, col, f"value must be strictly positive, got {v}")
    return v


def _reader(path):
    f = open(path, newline="")
    reader = csv.DictReader(f)
    if reader.fieldnames is None:
        f.close()
        raise SchemaError(f"{path}: empty file")
    return f, reader


def load_stations(path) -> list[StationRow]:
    """Read and validate the station attribute table."""
    f, reader = _reader(path)
    with f:
        header = [h.strip() for h in reader.fieldnames]
        missing = [c for c in STATION_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        extra = [c for c in header if c not in STATION_COLUMNS]
        unknown = [c for c in extra if c not in IGNORED_COLUMNS]
        if unknown:
            raise SchemaError(f"{path}: unknown columns {unknown}")
        if extra:
            log.warning("ignoring unused attribute columns %s", extra)
        rows, seen = [], set()
        for row_no, raw in enumerate(reader, start=2):
            raw = {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}
            sid = raw["station_id"]
            if not sid:
                raise ParseError(row_no, "station_id", "empty station id")
            if sid in seen:
                raise ParseError(row_no, "station_id", f"duplicate station id {sid!r}")
            seen.add(sid)
            vals = [
                _float(row_no, c, raw[c], positive=c not in ("centroid_x", "centroid_y"))
                for c in STATION_COLUMNS[1:]
            ]
            rows.append(StationRow(sid, *vals))
    return rows


def load_maxima(path, stations: Sequence[StationRow] | None = None) -> list[MaximaRow]:
    """Read and validate the annual-maxima table.

    With ``stations`` given, rows naming an unknown station are rejected.
    """
    known = None if stations is None else {s.station_id for s in stations}
    f, reader = _reader(path)
    with f:
        header = [h.strip() for h in reader.fieldnames]
        if sorted(header) != sorted(MAXIMA_COLUMNS):
            raise SchemaError(f"{path}: expected columns {list(MAXIMA_COLUMNS)}, got {header}")
        rows, seen = [], set()
        for row_no, raw in enumerate(reader, start=2):
            raw = {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}
            sid = raw["station_id"]
            if known is not None and sid not in known:
                raise ParseError(row_no, "station_id", f"unknown station {sid!r}")
            try:
                year = int(raw["year"])
            except ValueError:
                raise ParseError(row_no, "year", f"not an integer: {raw['year']!r}") from None
            if (sid, year) in seen:
                raise ParseError(row_no, "year", f"duplicate (station, year) ({sid}, {year})")
            seen.add((sid, year))
            rows.append(MaximaRow(sid, year, _float(row_no, "annual_max_m3s", raw["annual_max_m3s"], True)))
    return rows


def build_stations(station_rows: Sequence[StationRow], maxima_rows: Sequence[MaximaRow] = ()) -> list[Station]:
    records: dict[str, list[tuple[int, float]]] = {r.station_id: [] for r in station_rows}
    for m in maxima_rows:
        if m.station_id not in records:
            raise ValueError(f"maxima for unknown station {m.station_id!r}")
        records[m.station_id].append((m.year, m.annual_max_m3s))
    out = []
    for r in station_rows:
        rec = sorted(records[r.station_id])
        attrs = {k: getattr(r, k) for k in DEFAULT_ATTRIBUTES}
        out.append(
            Station(
                r.station_id,
                r.centroid_x,
                r.centroid_y,
                attrs,
                np.array([y for y, _ in rec], dtype=int),
                np.array([v for _, v in rec], dtype=float),
            )
        )
    return out


def load_basin(stations_path, maxima_path=None) -> list[Station]:
    srows = load_stations(stations_path)
    mrows = load_maxima(maxima_path, srows) if maxima_path else []
    return build_stations(srows, mrows)


def station_rows(stations: Iterable[Station]) -> list[StationRow]:
    return [
        StationRow(s.id, float(s.x), float(s.y), *(float(s.attributes[k]) for k in DEFAULT_ATTRIBUTES))
        for s in stations
    ]


def maxima_rows(stations: Iterable[Station]) -> list[MaximaRow]:
    return [
        MaximaRow(s.id, int(y), float(v))
        for s in stations
        for y, v in zip(s.years.tolist(), s.maxima.tolist())
    ]


def write_table(rows: Iterable[Sequence], columns: Sequence[str], out) -> None:
    """Write ``rows`` with a one-line header to a path or text stream."""
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", newline="") as f:
            write_table(rows, columns, f)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def table_text(rows, columns) -> str:
    buf = _io.StringIO()
    write_table(rows, columns, buf)
    return buf.getvalue()


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        return header, [row for row in r]


def write_stations(stations: Iterable[Station], path) -> None:
    write_table(station_rows(stations), STATION_COLUMNS, path)


def write_maxima(stations: Iterable[Station], path) -> None:
    write_table(maxima_rows(stations), MAXIMA_COLUMNS, path)


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    epsilon: float = 0.05
    min_J: int | None = None  # 8 for ungauged targets, 7 at-site
    max_J: int | None = None
    grid_step: float = 0.05
    tau: float = 2.0
    T: tuple[float, ...] = (50.0, 100.0, 200.0)
    R: int = 1000
    alpha: float = 0.05
    strata: tuple[tuple[int, int], ...] | None = None
    n_strata: int = 4
    seed: int = 0
    methods: tuple[str, ...] = ("roi", "cluster", "cca")
    C: int | None = None  # tuned by leave-one-out when unset
    r: float | None = None
    jobs: int = 1
    attributes: tuple[str, ...] = DEFAULT_ATTRIBUTES

    def min_J_for(self, atsite: bool) -> int:
        if self.min_J is not None:
            return self.min_J
        return 7 if atsite else 8


def load_config(path=None) -> dict:
    """Settings from a JSON file; ``path`` defaults to ``$ROIFLOOD_CONFIG``."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: config must be a JSON object")
    return data


def resolve_config(file_settings: dict, cli_settings: dict) -> RunConfig:
    """Merge with precedence CLI flag > config file > default."""
    names = {f.name for f in fields(RunConfig)}
    unknown = set(file_settings) - names
    if unknown:
        raise SchemaError(f"unknown config keys {sorted(unknown)}")
    merged = {**file_settings, **{k: v for k, v in cli_settings.items() if v is not None}}
    for key in ("T", "methods", "attributes"):
        if key in merged and merged[key] is not None:
            merged[key] = tuple(merged[key])
    if merged.get("strata") is not None:
        merged["strata"] = tuple(tuple(iv) for iv in merged["strata"])
    return RunConfig(**merged)


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
