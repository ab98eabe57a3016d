"""Daily price ingestion and the log-price / log-return series built on it."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np


class SeriesError(ValueError):
    """Raised for malformed or invalid price input."""


@dataclass(frozen=True)
class CsvSchema:
    """Where to find the date and price columns.

    Columns may be given as a header name or a 0-based index. Names only
    resolve when the input carries a header row.
    """

    date_col: int | str = 0
    price_col: int | str = 1
    delimiter: str = ","


@dataclass(frozen=True)
class PriceSeries:
    timestamps: tuple[date, ...]
    prices: np.ndarray
    label: str = ""

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 1:
            raise SeriesError("prices must be one-dimensional")
        if len(prices) < 2:
            raise SeriesError(f"need at least 2 observations, got {len(prices)}")
        if len(self.timestamps) != len(prices):
            raise SeriesError("timestamps and prices differ in length")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            bad = int(np.flatnonzero(~(prices > 0) | ~np.isfinite(prices))[0])
            raise SeriesError(f"non-positive or non-finite price at position {bad}")
        for i in range(1, len(self.timestamps)):
            if not self.timestamps[i] > self.timestamps[i - 1]:
                raise SeriesError(
                    f"timestamps not strictly increasing at position {i} "
                    f"({self.timestamps[i - 1]} -> {self.timestamps[i]})"
                )
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "timestamps", tuple(self.timestamps))

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True)
class LogSeries:
    values: np.ndarray
    label: str = ""
    timestamps: tuple[date, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ReturnSeries:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _resolve(col: int | str, header: list[str] | None, what: str) -> int:
    if isinstance(col, int):
        return col
    if col.lstrip("-").isdigit():
        return int(col)
    if header is None:
        raise SeriesError(f"{what} column {col!r} given by name but input has no header")
    names = [h.strip() for h in header]
    if col not in names:
        raise SeriesError(f"{what} column {col!r} not found in header {names}")
    return names.index(col)


def _read_rows(text: str, schema: CsvSchema):
    """Yield (line_number, cells) for non-blank rows plus the header, if any."""
    if not text.strip():
        raise SeriesError("empty input")
    reader = csv.reader(io.StringIO(text), delimiter=schema.delimiter)
    rows = [(i + 1, r) for i, r in enumerate(reader) if any(c.strip() for c in r)]
    if not rows:
        raise SeriesError("empty input")
    return rows


def _split_header(rows, schema: CsvSchema, numeric_col_key: str):
    first = rows[0][1]
    col = getattr(schema, numeric_col_key)
    if isinstance(col, str) and not col.lstrip("-").isdigit():
        return first, rows[1:]
    idx = int(col)
    if idx < len(first) and not _is_number(first[idx].strip()):
        return first, rows[1:]
    return None, rows


def parse_price_series(text: str, schema: CsvSchema | None = None, label: str = "") -> PriceSeries:
    """Parse delimiter-separated (date, price) rows into a validated series.

    Rows are sorted by date. A header row is detected when its price cell is
    not numeric. Errors name the offending 1-based line.
    """
    schema = schema or CsvSchema()
    rows = _read_rows(text, schema)
    header, body = _split_header(rows, schema, "price_col")
    if not body:
        raise SeriesError("empty input: header only")
    di = _resolve(schema.date_col, header, "date")
    pi = _resolve(schema.price_col, header, "price")

    records = []
    for line, cells in body:
        if max(di, pi) >= len(cells):
            raise SeriesError(f"malformed row {line}: expected at least {max(di, pi) + 1} columns")
        dcell, pcell = cells[di].strip(), cells[pi].strip()
        try:
            day = date.fromisoformat(dcell)
        except ValueError:
            raise SeriesError(f"malformed row {line}: bad ISO date {dcell!r}") from None
        if not pcell:
            raise SeriesError(f"malformed row {line}: missing price")
        try:
            price = float(pcell)
        except ValueError:
            raise SeriesError(f"malformed row {line}: bad price {pcell!r}") from None
        if not math.isfinite(price) or price <= 0:
            raise SeriesError(f"non-positive price at row {line}: {pcell}")
        records.append((day, price, line))

    records.sort(key=lambda r: r[0])
    for a, b in zip(records, records[1:]):
        if a[0] == b[0]:
            raise SeriesError(f"duplicate date {a[0]} at rows {a[2]} and {b[2]}")
    return PriceSeries(
        timestamps=tuple(r[0] for r in records),
        prices=np.array([r[1] for r in records]),
        label=label,
    )


def format_price_series(p: PriceSeries, schema: CsvSchema | None = None, header: bool = True) -> str:
    """Serialize back to the delimiter-separated layout that ``parse_price_series`` reads."""
    schema = schema or CsvSchema()
    out = io.StringIO()
    writer = csv.writer(out, delimiter=schema.delimiter, lineterminator="\n")
    if header:
        writer.writerow(["date", "price"])
    for d, v in zip(p.timestamps, p.prices):
        writer.writerow([d.isoformat(), repr(float(v))])
    return out.getvalue()


def parse_values(text: str, schema: CsvSchema | None = None) -> np.ndarray:
    """Read one numeric column as a raw real-valued series (no positivity check).

    Used when the input is already a value series, e.g. a log price or a
    filtered residual. ``schema.price_col`` selects the column.
    """
    schema = schema or CsvSchema(price_col=0)
    rows = _read_rows(text, schema)
    header, body = _split_header(rows, schema, "price_col")
    ci = _resolve(schema.price_col, header, "value")
    values = []
    for line, cells in body:
        if ci >= len(cells) or not cells[ci].strip():
            raise SeriesError(f"malformed row {line}: missing value")
        try:
            values.append(float(cells[ci]))
        except ValueError:
            raise SeriesError(f"malformed row {line}: bad value {cells[ci]!r}") from None
    if len(values) < 2:
        raise SeriesError(f"need at least 2 values, got {len(values)}")
    return np.array(values)


def to_log(p: PriceSeries) -> LogSeries:
    return LogSeries(np.log(p.prices), label=p.label, timestamps=p.timestamps)


def log_returns(x: LogSeries | np.ndarray) -> ReturnSeries:
    values = x.values if isinstance(x, LogSeries) else np.asarray(x, dtype=float)
    label = x.label if isinstance(x, LogSeries) else ""
    if len(values) < 2:
        raise SeriesError("series too short for returns: need length >= 2")
    return ReturnSeries(np.diff(values), label=label)
