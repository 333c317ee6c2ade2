"""CSV panel ingestion, listwise deletion and pre-processing transforms."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

#: field values read as missing
MISSING_TOKENS = frozenset({"", "NA"})


class CsvFormatError(ValueError):
    """A malformed panel file; the message names the offending line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NonNumericColumnError(ValueError):
    pass


@dataclass
class PanelTable:
    """Column-major table read from a CSV panel.

    Numeric columns are float arrays with NaN where a value was missing;
    columns with any non-numeric entry are kept as object arrays of strings
    (usable as group labels, not as model columns).
    """

    columns: list
    data: dict
    n_rows: int
    dropped: int = 0
    source_rows: int = 0
    notes: list = field(default_factory=list)

    @property
    def missing(self) -> dict:
        return {c: _missing_mask(self.data[c]) for c in self.columns}

    def is_numeric(self, name: str) -> bool:
        return self.data[name].dtype.kind == "f"

    def column(self, name: str) -> np.ndarray:
        if name not in self.data:
            raise KeyError(f"column {name!r} not found; available: {', '.join(self.columns)}")
        return self.data[name]

    def require_numeric(self, names: Sequence[str]) -> None:
        for name in names:
            col = self.column(name)
            if col.dtype.kind != "f":
                bad = next(v for v in col if v is not None and not _is_number(v))
                raise NonNumericColumnError(f"modeling column {name!r} holds a non-numeric value {bad!r}")

    def listwise(self, names: Sequence[str]) -> "PanelTable":
        """Drop every row with a missing value in any of ``names``."""
        names = list(dict.fromkeys(names))
        self.require_numeric(names)
        keep = np.ones(self.n_rows, dtype=bool)
        for name in names:
            keep &= ~_missing_mask(self.column(name))
        data = {c: v[keep] for c, v in self.data.items()}
        n_keep = int(keep.sum())
        return PanelTable(list(self.columns), data, n_keep, self.dropped + self.n_rows - n_keep,
                          self.source_rows or self.n_rows, list(self.notes))

    def to_frame(self, names: Sequence[str] | None = None) -> pd.DataFrame:
        names = self.columns if names is None else list(dict.fromkeys(names))
        return pd.DataFrame({c: self.column(c) for c in names})


def _missing_mask(col: np.ndarray) -> np.ndarray:
    if col.dtype.kind == "f":
        return np.isnan(col)
    return np.array([v is None for v in col], dtype=bool)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path) -> PanelTable:
    """Read a comma-delimited UTF-8 panel with a header row.

    Empty fields and ``NA`` are missing. Row order is preserved.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    CsvFormatError
        On an empty file, a duplicated or empty header name, or a row whose
        field count differs from the header's (the message gives the line).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("file is empty; a header row is required", 1) from None
        header = [h.strip() for h in header]
        if any(not h for h in header):
            raise CsvFormatError("header contains an empty column name", 1)
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise CsvFormatError(f"duplicate column names {dupes}", 1)
        raw = [[] for _ in header]
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"expected {len(header)} fields as in the header, found {len(row)}", reader.line_num
                )
            for j, v in enumerate(row):
                raw[j].append(v.strip())
    data = {}
    for name, values in zip(header, raw):
        parsed = [None if v in MISSING_TOKENS else v for v in values]
        try:
            data[name] = np.array([math.nan if v is None else float(v) for v in parsed], dtype=float)
        except ValueError:
            data[name] = np.array(parsed, dtype=object)
    n = len(raw[0]) if raw else 0
    return PanelTable(header, data, n, 0, n)


def write_csv(path, frame: pd.DataFrame) -> None:
    """Write a frame in the format :func:`load_csv` reads (NaN as ``NA``)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(frame.columns))
        cols = [frame[c].to_numpy() for c in frame.columns]
        for i in range(len(frame)):
            w.writerow([_format_value(col[i]) for col in cols])


def _format_value(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "NA"
        if float(v).is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(float(v))
    return str(v)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# ----------------------------------------------------------------------
# pre-processing transforms


def _group_order(frame: pd.DataFrame, group: str, time: str) -> np.ndarray:
    if frame[[group, time]].isna().any().any():
        raise ValueError(f"group column {group!r} and time column {time!r} must be fully observed")
    return np.lexsort((frame[time].to_numpy(), frame[group].to_numpy()))


def difference_within_group(frame: pd.DataFrame, column: str, group: str, time: str,
                            name: str | None = None) -> pd.DataFrame:
    """Add ``column[t] - column[t-1]`` within each group.

    The first observation of a group, and any observation whose previous
    year is absent (a gap in ``time``), is missing.
    """
    name = name or f"d_{column}"
    order = _group_order(frame, group, time)
    g = frame[group].to_numpy()[order]
    t = frame[time].to_numpy(dtype=float)[order]
    x = frame[column].to_numpy(dtype=float)[order]
    out = np.full(len(frame), np.nan)
    same = np.r_[False, (g[1:] == g[:-1]) & (t[1:] - t[:-1] == 1)]
    diffs = np.r_[np.nan, x[1:] - x[:-1]]
    out[order] = np.where(same, diffs, np.nan)
    result = frame.copy()
    result[name] = out
    return result


def peace_years(frame: pd.DataFrame, event: str, group: str, time: str,
                name: str = "peace_years") -> pd.DataFrame:
    """Years since the last event within each group.

    The count starts at 0 on a group's first observation, grows by one per
    observed year and resets to 0 in the year after an event. A missing
    event value leaves the counter running and the row's count missing.
    """
    order = _group_order(frame, group, time)
    g = frame[group].to_numpy()[order]
    ev = frame[event].to_numpy(dtype=float)[order]
    counts = np.zeros(len(frame))
    prev_group = object()
    c = 0.0
    for i in range(len(order)):
        if g[i] != prev_group:
            c = 0.0
            prev_group = g[i]
        counts[i] = c
        c = 0.0 if ev[i] == 1 else c + 1.0
    counts[np.isnan(ev)] = np.nan
    out = np.empty(len(frame))
    out[order] = counts
    result = frame.copy()
    result[name] = out
    return result
