"""Popularity values, dataset schema, and tensor ingestion.

A record is one sharing event: user u shared post v at time t, the post
has collected ``views`` views over ``age_days`` days, and both the user
and the post carry precomputed numeric context features.  Raw popularity
is log-normalized as ``log2(views / age_days) + 1`` to tame the many
orders of magnitude view counts span (views below 1 are clamped to 1 so
the formula stays defined).

Canonical file schema (CSV header, identical field names in JSON lines):

    user_id,post_id,share_time,views,age_days,uf_0..uf_{p-1},pf_0..pf_{q-1}

``share_time`` is ISO-8601 (UTC assumed when no offset) or epoch seconds.
"""

from __future__ import annotations

import csv
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from mtpop.rearrange import ContextFeatures
from mtpop.tensor import MaskedTensor, new_tensor

SECONDS_PER_DAY = 86400.0
MANDATORY_COLUMNS = ("user_id", "post_id", "share_time", "views", "age_days")


def log_popularity(r: int, d: float) -> float:
    """Log-normalized popularity ``log2(max(r, 1) / d) + 1``.

    ``r`` is the view count, ``d`` the age in days.  Zero views are clamped
    to one view so the logarithm stays finite.
    """
    if d <= 0:
        raise ValueError(f"age in days must be > 0, got {d}")
    if r < 0:
        raise ValueError(f"view count must be >= 0, got {r}")
    return math.log2(max(r, 1) / d) + 1.0


@dataclass
class PopularityRecord:
    user_id: str
    post_id: str
    share_time: float  # epoch seconds
    views: int
    age_days: float
    user_features: np.ndarray
    post_features: np.ndarray

    def __post_init__(self):
        if not self.user_id or not self.post_id:
            raise ValueError("user_id and post_id must be non-empty")
        if self.views < 0:
            raise ValueError(f"views must be >= 0, got {self.views}")
        if self.age_days <= 0:
            raise ValueError(f"age_days must be > 0, got {self.age_days}")
        self.user_features = np.asarray(self.user_features, dtype=np.float64)
        self.post_features = np.asarray(self.post_features, dtype=np.float64)

    @property
    def popularity(self) -> float:
        return log_popularity(self.views, self.age_days)


@dataclass
class Dataset:
    records: list[PopularityRecord]
    time_origin: float
    bin_width: float = 1.0  # days

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError(f"bin_width must be > 0, got {self.bin_width}")
        for rec in self.records:
            if rec.share_time < self.time_origin:
                raise ValueError(
                    f"record share_time {rec.share_time} precedes time_origin {self.time_origin}"
                )

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class IdMaps:
    """Axis index bookkeeping produced by :func:`to_tensor`."""

    user_ids: list[str]
    post_ids: list[str]
    record_coords: list[tuple[int, int, int]]

    @property
    def user_index(self) -> dict[str, int]:
        return {uid: i for i, uid in enumerate(self.user_ids)}

    @property
    def post_index(self) -> dict[str, int]:
        return {pid: i for i, pid in enumerate(self.post_ids)}


def _parse_share_time(raw: str) -> float:
    raw = raw.strip()
    try:
        return float(raw)
    except ValueError:
        pass
    iso = raw[:-1] + "+00:00" if raw.endswith("Z") else raw
    dt = datetime.fromisoformat(iso)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


_FEATURE_RE = re.compile(r"^(uf|pf)_(\d+)$")


def _feature_columns(fieldnames: list[str]) -> tuple[list[str], list[str], list[str]]:
    uf, pf, extras = {}, {}, []
    for name in fieldnames:
        if name in MANDATORY_COLUMNS:
            continue
        m = _FEATURE_RE.match(name)
        if m:
            (uf if m.group(1) == "uf" else pf)[int(m.group(2))] = name
        else:
            extras.append(name)
    for kind, table in (("uf", uf), ("pf", pf)):
        if sorted(table) != list(range(len(table))):
            raise ValueError(f"{kind}_* columns must be contiguous from {kind}_0, got {sorted(table)}")
    return [uf[i] for i in range(len(uf))], [pf[i] for i in range(len(pf))], extras


def _row_to_record(row: dict, uf_cols: list[str], pf_cols: list[str]) -> PopularityRecord:
    views_raw = str(row["views"]).strip()
    try:
        views = int(views_raw)
    except ValueError:
        raise ValueError(f"views must be an integer, got {views_raw!r}")
    rec = PopularityRecord(
        user_id=str(row["user_id"]).strip(),
        post_id=str(row["post_id"]).strip(),
        share_time=_parse_share_time(str(row["share_time"])),
        views=views,
        age_days=float(row["age_days"]),
        user_features=[float(row[c]) for c in uf_cols],
        post_features=[float(row[c]) for c in pf_cols],
    )
    if not np.all(np.isfinite(rec.user_features)) or not np.all(np.isfinite(rec.post_features)):
        raise ValueError("feature vector contains non-finite values")
    return rec


def ingest(path, fmt: str | None = None, bin_width: float = 1.0) -> Dataset:
    """Read a dataset file, validating row by row.

    Malformed rows are rejected with a warning naming the 1-based data row;
    if more than 10% of rows are rejected the whole file is refused.
    Unknown extra columns are ignored with a single warning.
    """
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson", ".json") else "csv"
    if fmt == "csv":
        rows, fieldnames = _read_csv(path)
    elif fmt == "jsonl":
        rows, fieldnames = _read_jsonl(path)
    else:
        raise ValueError(f"unknown format {fmt!r} (expected 'csv' or 'jsonl')")

    missing = [c for c in MANDATORY_COLUMNS if c not in fieldnames]
    if missing:
        raise ValueError(f"missing mandatory columns: {missing}")
    uf_cols, pf_cols, extras = _feature_columns(fieldnames)
    if extras:
        warnings.warn(f"ignoring unknown columns: {extras}")

    records, rejects = [], []
    for i, row in enumerate(rows, start=1):
        try:
            records.append(_row_to_record(row, uf_cols, pf_cols))
        except (ValueError, KeyError, TypeError) as exc:
            rejects.append((i, str(exc)))
    for i, why in rejects:
        warnings.warn(f"rejected row {i}: {why}")
    if rows and len(rejects) > 0.10 * len(rows):
        detail = "; ".join(f"row {i}: {why}" for i, why in rejects[:5])
        raise ValueError(
            f"{len(rejects)} of {len(rows)} rows rejected (>10%), refusing file. First problems: {detail}"
        )

    origin = min((r.share_time for r in records), default=0.0)
    return Dataset(records, time_origin=origin, bin_width=bin_width)


def _read_csv(path: Path) -> tuple[list[dict], list[str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file, no header")
        return list(reader), list(reader.fieldnames)


def _read_jsonl(path: Path) -> tuple[list[dict], list[str]]:
    rows = []
    fieldnames: list[str] = []
    seen = set()
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            rows.append(row)
            for key in row:
                if key not in seen:
                    seen.add(key)
                    fieldnames.append(key)
    return rows, fieldnames


def _format_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() and abs(x) < 2**53 else repr(float(x))


def write_csv(ds: Dataset, path) -> None:
    """Write the canonical CSV; re-ingesting it reproduces the dataset."""
    p = len(ds.records[0].user_features) if ds.records else 0
    q = len(ds.records[0].post_features) if ds.records else 0
    header = list(MANDATORY_COLUMNS) + [f"uf_{i}" for i in range(p)] + [f"pf_{i}" for i in range(q)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in ds.records:
            writer.writerow(
                [rec.user_id, rec.post_id, _format_number(rec.share_time), rec.views,
                 _format_number(rec.age_days)]
                + [_format_number(x) for x in rec.user_features]
                + [_format_number(x) for x in rec.post_features]
            )


def write_jsonl(ds: Dataset, path) -> None:
    """JSON-lines variant of :func:`write_csv` with identical field names."""
    with open(path, "w") as fh:
        for rec in ds.records:
            row = {
                "user_id": rec.user_id,
                "post_id": rec.post_id,
                "share_time": rec.share_time,
                "views": rec.views,
                "age_days": rec.age_days,
            }
            row.update({f"uf_{i}": float(x) for i, x in enumerate(rec.user_features)})
            row.update({f"pf_{i}": float(x) for i, x in enumerate(rec.post_features)})
            fh.write(json.dumps(row) + "\n")


def to_tensor(
    ds: Dataset, bin_width: float | None = None
) -> tuple[MaskedTensor, IdMaps, ContextFeatures]:
    """Build the (user x post x time-bin) tensor from a dataset.

    Axes are indexed by first appearance order; the time bin of a record is
    ``floor((share_time - origin) / bin_width)``.  When several records land
    in the same cell the cell holds their mean popularity.  Context features
    keep the first vector seen per id and the earliest share time per post.
    """
    if not ds.records:
        raise ValueError("cannot build a tensor from an empty dataset")
    width = ds.bin_width if bin_width is None else bin_width
    if width <= 0:
        raise ValueError("bin_width must be > 0")
    width_s = width * SECONDS_PER_DAY

    user_ids: list[str] = []
    post_ids: list[str] = []
    user_idx: dict[str, int] = {}
    post_idx: dict[str, int] = {}
    user_feats: dict[str, np.ndarray] = {}
    post_feats: dict[str, np.ndarray] = {}
    share_times: dict[str, float] = {}

    coords = []
    for rec in ds.records:
        if rec.user_id not in user_idx:
            user_idx[rec.user_id] = len(user_ids)
            user_ids.append(rec.user_id)
            user_feats[rec.user_id] = rec.user_features
        if rec.post_id not in post_idx:
            post_idx[rec.post_id] = len(post_ids)
            post_ids.append(rec.post_id)
            post_feats[rec.post_id] = rec.post_features
        share_times[rec.post_id] = min(share_times.get(rec.post_id, math.inf), rec.share_time)
        t = int((rec.share_time - ds.time_origin) // width_s)
        coords.append((user_idx[rec.user_id], post_idx[rec.post_id], t))

    dims = (len(user_ids), len(post_ids), max(t for _, _, t in coords) + 1)
    sums = np.zeros(dims)
    counts = np.zeros(dims)
    for (u, v, t), rec in zip(coords, ds.records):
        sums[u, v, t] += rec.popularity
        counts[u, v, t] += 1
    mask = counts > 0
    values = np.divide(sums, counts, out=np.zeros(dims), where=mask)

    tensor = MaskedTensor(values, mask)
    id_maps = IdMaps(user_ids, post_ids, coords)
    features = ContextFeatures(user_feats, post_feats, share_times)
    return tensor, id_maps, features
