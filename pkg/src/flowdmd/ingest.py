"""Weekly origin-destination flow records to a snapshot data matrix.

Records are parsed from delimited text, grouped by week, placed into k x k
O-D matrices, symmetrized with ``(A + A.T) / 2`` and vectorized column-major
into the columns of a ``k**2 x m`` matrix.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DivisionGuardError,
    FormatError,
    MappingError,
    OrderingError,
    SchemaError,
    ShapeError,
)

DATE_FORMATS = ("%Y-%m-%d", "%m/%d/%Y", "%m/%d/%y", "%Y/%m/%d", "%Y%m%d")


@dataclass(frozen=True)
class ColumnMap:
    """Names of the input columns feeding each record field.

    The defaults follow the nine-column weekly state-to-state layout
    (``geoid_o, geoid_d, lng_o, lat_o, lng_d, lat_d, date_range,
    visitor_flows, pop_flows``). ``date`` may hold either a single date or a
    ``"start - end"`` range; only the start is kept.
    """

    origin: str = "geoid_o"
    dest: str = "geoid_d"
    date: str = "date_range"
    flow: str = "visitor_flows"
    pop: str | None = None
    devices: str | None = None
    delimiter: str = ","

    def required(self) -> list[str]:
        cols = [self.origin, self.dest, self.date, self.flow]
        cols += [c for c in (self.pop, self.devices) if c]
        return cols


@dataclass(frozen=True)
class FlowRecord:
    origin_id: str
    dest_id: str
    week_start: date
    visitor_flow: float
    pop_origin: float | None = None
    num_devices_origin: float | None = None

    def __post_init__(self):
        if not self.visitor_flow >= 0:
            raise DataError(f"visitor_flow must be >= 0, got {self.visitor_flow}")
        if self.pop_origin is not None and self.num_devices_origin is None:
            raise DataError("pop_origin given without num_devices_origin")


def parse_date(text: str) -> date:
    """Parse a date, or the start of a ``"start - end"`` range."""
    text = text.strip()
    for sep in (" - ", " to "):
        if sep in text:
            text = text.split(sep, 1)[0].strip()
            break
    for fmt in DATE_FORMATS:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    try:
        return date.fromisoformat(text[:10])
    except ValueError:
        raise ValueError(f"unrecognized date {text!r}") from None


def _parse_nonneg(text, name):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{name} is not finite: {text!r}")
    if value < 0:
        raise ValueError(f"negative {name} {value:g}")
    return value


def parse_flow_csv(source, column_map: ColumnMap | None = None) -> list[FlowRecord]:
    """Read every data row of a delimited flow file into :class:`FlowRecord`.

    ``source`` is a path, a binary stream or a text stream. All bad rows are
    collected and reported together in one :class:`DataError`; no partial
    result is ever returned. Line numbers count the header as line 1.
    """
    cmap = column_map or ColumnMap()
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return parse_flow_csv(fh, cmap)
    if isinstance(source, io.TextIOBase):
        text = source
    else:
        text = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")

    reader = csv.DictReader(text, delimiter=cmap.delimiter)
    header = reader.fieldnames
    if header is None:
        raise SchemaError("input has no header row")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    missing = [c for c in cmap.required() if c not in header]
    if missing:
        raise SchemaError(f"missing mapped column(s) {missing}; header is {header}")

    records, problems = [], []
    for row in reader:
        line = reader.line_num
        try:
            pop = devices = None
            if cmap.pop:
                pop = _parse_nonneg(row[cmap.pop], "population")
            if cmap.devices:
                devices = _parse_nonneg(row[cmap.devices], "device count")
            records.append(
                FlowRecord(
                    origin_id=row[cmap.origin].strip(),
                    dest_id=row[cmap.dest].strip(),
                    week_start=parse_date(row[cmap.date]),
                    visitor_flow=_parse_nonneg(row[cmap.flow], "flow"),
                    pop_origin=pop,
                    num_devices_origin=devices,
                )
            )
        except (ValueError, TypeError, AttributeError) as exc:
            # TypeError/AttributeError: short row, DictReader fills with None
            problems.append((line, str(exc) or type(exc).__name__))
    if problems:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        raise DataError(f"{len(problems)} invalid row(s): {detail}{more}", problems)
    return records


def write_flow_csv(records: Iterable[FlowRecord], dest, column_map: ColumnMap | None = None):
    """Write records in a layout :func:`parse_flow_csv` reads back identically."""
    cmap = column_map or ColumnMap()
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            return write_flow_csv(records, fh, cmap)
    cols = cmap.required()
    writer = csv.writer(dest, delimiter=cmap.delimiter, lineterminator="\n")
    writer.writerow(cols)
    for rec in records:
        row = {
            cmap.origin: rec.origin_id,
            cmap.dest: rec.dest_id,
            cmap.date: rec.week_start.isoformat(),
            cmap.flow: repr(float(rec.visitor_flow)),
        }
        if cmap.pop:
            row[cmap.pop] = "" if rec.pop_origin is None else repr(float(rec.pop_origin))
        if cmap.devices:
            row[cmap.devices] = (
                "" if rec.num_devices_origin is None else repr(float(rec.num_devices_origin))
            )
        writer.writerow([row[c] for c in cols])


def infer_pop_flow(record: FlowRecord) -> float:
    """Population flow: visitor flow scaled by origin population per device."""
    if record.pop_origin is None or not record.num_devices_origin:
        raise DivisionGuardError(
            f"cannot infer population flow for {record.origin_id}->{record.dest_id} "
            f"on {record.week_start}: device count is {record.num_devices_origin!r}"
        )
    return record.visitor_flow * record.pop_origin / record.num_devices_origin


@dataclass(frozen=True)
class PlaceIndex:
    """Bijection between place identifiers and 0-based matrix positions.

    Identifiers are kept in ascending lexicographic order.
    """

    places: tuple[str, ...]
    _pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        places = tuple(self.places)
        if len(set(places)) != len(places):
            raise MappingError("duplicate place identifiers")
        object.__setattr__(self, "places", places)
        object.__setattr__(self, "_pos", {p: i for i, p in enumerate(places)})

    @classmethod
    def from_ids(cls, ids: Iterable[str]) -> "PlaceIndex":
        return cls(tuple(sorted(set(ids))))

    @classmethod
    def from_records(cls, records: Iterable[FlowRecord]) -> "PlaceIndex":
        ids = set()
        for r in records:
            ids.add(r.origin_id)
            ids.add(r.dest_id)
        return cls.from_ids(ids)

    @property
    def k(self) -> int:
        return len(self.places)

    def __len__(self):
        return len(self.places)

    def __contains__(self, place):
        return place in self._pos

    def index(self, place: str) -> int:
        try:
            return self._pos[place]
        except KeyError:
            raise MappingError(f"unknown place id {place!r}") from None

    def resolve(self, token: str) -> int:
        """Position of ``token``; ``#n`` selects the n-th place (1-based)."""
        if token in self._pos:
            return self._pos[token]
        if token.startswith("#") and token[1:].isdigit():
            n = int(token[1:])
            if 1 <= n <= self.k:
                return n - 1
        raise MappingError(f"unknown place id {token!r}")


@dataclass(frozen=True)
class OdMatrix:
    week_index: int
    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"O-D matrix must be square, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DataError("O-D matrix has non-finite entries")
        if np.any(a < 0):
            raise DataError("O-D matrix has negative entries")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)

    @property
    def k(self) -> int:
        return self.entries.shape[0]


def build_od_matrix(records: Sequence[FlowRecord], index: PlaceIndex,
                    week_index: int = 0, use_pop_flow: bool = False) -> OdMatrix:
    """Sum one week's flows into a k x k matrix; entry (i, j) is i -> j."""
    weeks = {r.week_start for r in records}
    if len(weeks) > 1:
        raise OrderingError(f"records span {len(weeks)} weeks, expected one")
    a = np.zeros((index.k, index.k))
    for r in records:
        i, j = index.index(r.origin_id), index.index(r.dest_id)
        a[i, j] += infer_pop_flow(r) if use_pop_flow else r.visitor_flow
    return OdMatrix(week_index, a)


def symmetrize(a: OdMatrix) -> OdMatrix:
    e = a.entries
    return OdMatrix(a.week_index, (e + e.T) / 2)


def vectorize(s: np.ndarray) -> np.ndarray:
    """Stack the columns of a square matrix into one vector."""
    return np.asarray(s).reshape(-1, order="F")


def unvectorize(col: np.ndarray, k: int) -> np.ndarray:
    return np.asarray(col).reshape((k, k), order="F")


@dataclass(frozen=True)
class SnapshotMatrix:
    """Data matrix whose t-th column is the vectorized symmetric O-D matrix of week t."""

    data: np.ndarray
    week_labels: tuple[date, ...]
    place_index: PlaceIndex

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        k = self.place_index.k
        if data.ndim != 2 or data.shape[0] != k * k:
            raise ShapeError(f"expected {k * k} rows for k={k}, got shape {data.shape}")
        labels = tuple(self.week_labels)
        if len(labels) != data.shape[1]:
            raise ShapeError(f"{len(labels)} week labels for {data.shape[1]} columns")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise OrderingError("week labels must be strictly increasing")
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "week_labels", labels)

    @property
    def k(self) -> int:
        return self.place_index.k

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def column_matrix(self, t: int) -> np.ndarray:
        return unvectorize(self.data[:, t], self.k)

    def pair_series(self, origin: str, dest: str) -> np.ndarray:
        i, j = self.place_index.resolve(origin), self.place_index.resolve(dest)
        return self.data[i + j * self.k]

    def select(self, start: int, stop: int) -> "SnapshotMatrix":
        """Columns ``start..stop`` (0-based, half-open)."""
        return SnapshotMatrix(
            self.data[:, start:stop], self.week_labels[start:stop], self.place_index
        )

    def week_position(self, label: date) -> int:
        try:
            return self.week_labels.index(label)
        except ValueError:
            raise MappingError(f"week {label} not in snapshot data") from None

    def __eq__(self, other):
        if not isinstance(other, SnapshotMatrix):
            return NotImplemented
        return (
            self.place_index.places == other.place_index.places
            and self.week_labels == other.week_labels
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def build_snapshot_matrix(weeks: Sequence[OdMatrix], index: PlaceIndex,
                          week_labels: Sequence[date] | None = None) -> SnapshotMatrix:
    """Symmetrize and vectorize chronologically ordered weekly O-D matrices."""
    if not weeks:
        raise ShapeError("no weeks to assemble")
    for w in weeks:
        if w.k != index.k:
            raise ShapeError(f"week {w.week_index} has k={w.k}, index has k={index.k}")
    idx = [w.week_index for w in weeks]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise OrderingError(f"week indices must be strictly increasing, got {idx}")
    if week_labels is None:
        week_labels = [date.fromordinal(date(1970, 1, 5).toordinal() + 7 * i) for i in idx]
    cols = [vectorize(symmetrize(w).entries) for w in weeks]
    return SnapshotMatrix(np.column_stack(cols), tuple(week_labels), index)


def snapshots_from_records(records: Sequence[FlowRecord], index: PlaceIndex | None = None,
                           use_pop_flow: bool = False) -> SnapshotMatrix:
    """Group records by week start date and assemble the full data matrix."""
    if not records:
        raise ShapeError("no flow records")
    index = index or PlaceIndex.from_records(records)
    by_week = defaultdict(list)
    for r in records:
        by_week[r.week_start].append(r)
    labels = sorted(by_week)
    weeks = [build_od_matrix(by_week[d], index, t, use_pop_flow) for t, d in enumerate(labels)]
    return build_snapshot_matrix(weeks, index, labels)


def discover_inputs(paths: Iterable[str | Path], pattern: str = "*.csv") -> list[Path]:
    """Expand directories to their matching files; keep explicit files as given."""
    found = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(p.rglob(pattern)))
        elif p.exists():
            found.append(p)
        else:
            raise FileNotFoundError(f"input not found: {p}")
    return found


# --- snapshot file ---------------------------------------------------------
#
#   FLOWDMD-SNAPSHOTS 1
#   k <k>
#   m <m>
#   places <id>,<id>,...         (ids must not contain ',' or newlines)
#   weeks <iso date>,...
#   meta <key> <value>           (zero or more)
#   data
#   <m lines, each the k*k entries of one column, comma separated, repr floats>

SNAPSHOT_MAGIC = "FLOWDMD-SNAPSHOTS"
SNAPSHOT_VERSION = 1


def write_snapshots(snap: SnapshotMatrix, path, meta: dict | None = None):
    for p in snap.place_index.places:
        if "," in p or "\n" in p:
            raise FormatError(f"place id {p!r} cannot be stored in a snapshot file")
    lines = [
        f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}",
        f"k {snap.k}",
        f"m {snap.m}",
        "places " + ",".join(snap.place_index.places),
        "weeks " + ",".join(d.isoformat() for d in snap.week_labels),
    ]
    for key, value in (meta or {}).items():
        lines.append(f"meta {key} {value}")
    lines.append("data")
    for t in range(snap.m):
        lines.append(",".join(repr(float(v)) for v in snap.data[:, t]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_snapshots(path, with_meta: bool = False):
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].split()[:1] != [SNAPSHOT_MAGIC]:
        raise FormatError(f"{path}: not a snapshot file")
    version = int(text[0].split()[1])
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"{path}: unsupported snapshot version {version}")
    head, meta, pos = {}, {}, 1
    while pos < len(text) and text[pos] != "data":
        key, _, value = text[pos].partition(" ")
        if key == "meta":
            mk, _, mv = value.partition(" ")
            meta[mk] = mv
        else:
            head[key] = value
        pos += 1
    try:
        k, m = int(head["k"]), int(head["m"])
        places = tuple(head["places"].split(",")) if head["places"] else ()
        weeks = tuple(date.fromisoformat(w) for w in head["weeks"].split(",")) if m else ()
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad header ({exc})") from None
    rows = text[pos + 1:pos + 1 + m]
    if len(rows) != m:
        raise FormatError(f"{path}: expected {m} data lines, found {len(rows)}")
    data = np.array([[float(v) for v in row.split(",")] for row in rows]).T
    if m == 0:
        data = np.zeros((k * k, 0))
    snap = SnapshotMatrix(data.reshape(k * k, m), weeks, PlaceIndex(places))
    return (snap, meta) if with_meta else snap
