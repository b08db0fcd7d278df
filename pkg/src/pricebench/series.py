"""Daily price series: parsing, validation, and calendar repair.

A series is a sequence of daily records, each carrying a minimum and a
maximum quoted price plus their midpoint. Records are kept in strict
date order. Validation flags suspect records (zero prices, values
outside a configured validity band) without altering them; repair fills
calendar gaps by carrying the previous day's record forward so that
downstream windowing can assume one record per day.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError

# Default validity band for retail prices, in currency units per kg.
DEFAULT_PRICE_LOW = 0.1
DEFAULT_PRICE_HIGH = 500.0

ANOMALY_KINDS = ("out-of-range", "zero-price", "gap-filled")


def compute_mid(min_price: float, max_price: float) -> float:
    """Midpoint of the daily min/max quotes."""
    return 0.5 * (min_price + max_price)


@dataclass(frozen=True)
class PriceRecord:
    """One day's quotes for a single commodity."""

    date: dt.date
    min_price: float
    max_price: float
    mid_price: float


@dataclass(frozen=True)
class AnomalyFlag:
    """Marks a suspect or synthesized record; the record itself is untouched."""

    date: dt.date
    kind: str
    raw_value: float

    def __post_init__(self) -> None:
        if self.kind not in ANOMALY_KINDS:
            raise ValueError(f"unknown anomaly kind {self.kind!r}")


@dataclass(frozen=True)
class PriceSeries:
    """An ordered daily price series for one commodity.

    Invariant: record dates are strictly increasing. After repair (see
    :func:`forward_fill`) they are also consecutive.
    """

    commodity: str
    records: tuple[PriceRecord, ...]
    anomalies: tuple[AnomalyFlag, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for prev, cur in zip(self.records, self.records[1:]):
            if cur.date <= prev.date:
                raise DataError(
                    f"{self.commodity}: record dates must be strictly increasing "
                    f"({prev.date} followed by {cur.date})"
                )

    def __len__(self) -> int:
        return len(self.records)

    def dates(self) -> list[dt.date]:
        return [r.date for r in self.records]

    def mid_values(self) -> np.ndarray:
        return np.array([r.mid_price for r in self.records], dtype=np.float64)

    def is_contiguous(self) -> bool:
        """True when there is exactly one record per calendar day."""
        if not self.records:
            return True
        span = (self.records[-1].date - self.records[0].date).days + 1
        return span == len(self.records)


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV column names onto record fields.

    Either ``min_col`` and ``max_col`` are both given, or ``mid_col``
    alone; in the latter case min and max are set equal to the midpoint.
    """

    date_col: str = "date"
    min_col: str | None = "min"
    max_col: str | None = "max"
    mid_col: str | None = None

    def __post_init__(self) -> None:
        has_pair = self.min_col is not None and self.max_col is not None
        has_mid = self.mid_col is not None
        if has_pair == has_mid:
            raise DataError(
                "schema needs either min/max columns or a mid column, not both"
            )


def _parse_iso_date(text: str) -> dt.date:
    # strict YYYY-MM-DD; anything else is a caller error
    return dt.date.fromisoformat(text.strip())


def parse_series(
    text: str,
    commodity: str,
    schema: ColumnSchema | None = None,
) -> PriceSeries:
    """Parse a CSV document into a :class:`PriceSeries`.

    Rows may arrive in any order; output records are sorted by date.
    All malformed rows are collected and reported together with their
    1-based row numbers. Duplicate dates are an error.
    """
    schema = schema or ColumnSchema()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise DataError(f"{commodity}: empty input, no header row")
    needed = [schema.date_col]
    needed += [schema.mid_col] if schema.mid_col else [schema.min_col, schema.max_col]
    missing = [c for c in needed if c not in reader.fieldnames]
    if missing:
        raise DataError(f"{commodity}: missing columns {missing} in header")

    rows: list[PriceRecord] = []
    problems: list[str] = []
    seen: dict[dt.date, int] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            day = _parse_iso_date(row[schema.date_col])
        except (ValueError, TypeError):
            problems.append(f"row {lineno}: malformed date {row.get(schema.date_col)!r}")
            continue
        try:
            if schema.mid_col:
                mid = float(row[schema.mid_col])
                lo = hi = mid
            else:
                lo = float(row[schema.min_col])
                hi = float(row[schema.max_col])
                mid = compute_mid(lo, hi)
        except (ValueError, TypeError):
            problems.append(f"row {lineno}: non-numeric price")
            continue
        if day in seen:
            problems.append(f"row {lineno}: duplicate date {day} (first at row {seen[day]})")
            continue
        seen[day] = lineno
        rows.append(PriceRecord(day, lo, hi, mid))

    if problems:
        raise DataError(f"{commodity}: " + "; ".join(problems))
    if not rows:
        raise DataError(f"{commodity}: no data rows")
    rows.sort(key=lambda r: r.date)
    return PriceSeries(commodity=commodity, records=tuple(rows))


def validate(
    series: PriceSeries,
    low: float = DEFAULT_PRICE_LOW,
    high: float = DEFAULT_PRICE_HIGH,
) -> list[AnomalyFlag]:
    """Flag records whose prices are zero or fall outside ``[low, high]``.

    Exact zeros get kind ``zero-price`` (they take precedence over the
    band check); other violations get ``out-of-range``. Records are
    never modified or dropped here.
    """
    if low >= high:
        raise DataError(f"validity band is empty: low={low} >= high={high}")
    flags: list[AnomalyFlag] = []
    for rec in series.records:
        values = (rec.mid_price, rec.min_price, rec.max_price)
        zero = next((v for v in values if v == 0.0), None)
        if zero is not None:
            flags.append(AnomalyFlag(rec.date, "zero-price", zero))
            continue
        bad = next((v for v in values if v < low or v > high), None)
        if bad is not None:
            flags.append(AnomalyFlag(rec.date, "out-of-range", bad))
    return flags


def forward_fill(series: PriceSeries) -> PriceSeries:
    """Fill calendar gaps by repeating the previous day's record.

    Each synthesized record is flagged ``gap-filled``. Existing records,
    including ones already flagged by :func:`validate`, are retained
    exactly as they are. The result has one record per day from the
    first to the last observed date.
    """
    if not series.records:
        raise DataError(f"{series.commodity}: cannot repair an empty series")
    out: list[PriceRecord] = [series.records[0]]
    flags: list[AnomalyFlag] = list(series.anomalies)
    for rec in series.records[1:]:
        prev = out[-1]
        day = prev.date + dt.timedelta(days=1)
        while day < rec.date:
            out.append(PriceRecord(day, prev.min_price, prev.max_price, prev.mid_price))
            flags.append(AnomalyFlag(day, "gap-filled", prev.mid_price))
            day += dt.timedelta(days=1)
        out.append(rec)
    repaired = PriceSeries(
        commodity=series.commodity,
        records=tuple(out),
        anomalies=tuple(sorted(flags, key=lambda f: (f.date, f.kind))),
    )
    assert repaired.is_contiguous()
    return repaired


def interpolate_zeros(series: PriceSeries) -> PriceSeries:
    """Replace zero-price records by linear interpolation between neighbors.

    Off by default in the pipeline; intended for sensitivity runs. A zero
    at the very start or end of the series is held at the nearest nonzero
    value instead of extrapolating.
    """
    recs = list(series.records)
    fields = ("min_price", "max_price", "mid_price")
    columns = {f: np.array([getattr(r, f) for r in recs], dtype=np.float64) for f in fields}
    zero_rows = np.zeros(len(recs), dtype=bool)
    for f in fields:
        zero_rows |= columns[f] == 0.0
    if not zero_rows.any():
        return series
    if zero_rows.all():
        raise DataError(f"{series.commodity}: every record is zero, nothing to interpolate from")
    idx = np.arange(len(recs), dtype=np.float64)
    for f in fields:
        col = columns[f]
        bad = col == 0.0
        if bad.any():
            col[bad] = np.interp(idx[bad], idx[~bad], col[~bad])
    out = [
        PriceRecord(r.date, columns["min_price"][i], columns["max_price"][i], columns["mid_price"][i])
        if zero_rows[i]
        else r
        for i, r in enumerate(recs)
    ]
    return PriceSeries(series.commodity, tuple(out), series.anomalies)


def pearson_matrix(series_values: list[np.ndarray]) -> np.ndarray:
    """Pairwise Pearson correlation matrix for aligned series.

    All inputs must have the same length and nonzero variance.
    """
    if len(series_values) < 2:
        raise DataError("need at least two series to correlate")
    n = len(series_values[0])
    for i, v in enumerate(series_values):
        if len(v) != n:
            raise DataError(f"series {i} has length {len(v)}, expected {n}")
        if np.std(v) == 0.0:
            raise DataError(f"series {i} has zero variance")
    mat = np.corrcoef(np.vstack(series_values))
    return np.clip(mat, -1.0, 1.0)
