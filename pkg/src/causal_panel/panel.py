"""Panel data model, CSV ingestion/export and missingness bookkeeping.

A panel holds, for every country, an ``indicator x year`` matrix of real values
with an explicit missingness mask, plus a binary event label per year.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import quote, unquote

import numpy as np

from .errors import DomainError, DuplicateKeyError, ParseError

LABEL = "__label__"
LONG_HEADER = ("country", "year", "indicator", "value")
LABEL_HEADER = ("country", "year", "label")
DEFAULT_SPARSE_THRESHOLD = 0.8


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def format_number(v: float) -> str:
    """Shortest repr that round-trips to the same double."""
    return repr(float(v))


@dataclass(frozen=True, eq=False)
class CountryPanel:
    country_id: str
    indicators: tuple
    years: tuple
    values: np.ndarray
    missing: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        indicators = tuple(self.indicators)
        years = tuple(int(y) for y in self.years)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(indicators), len(years)):
            raise ValueError(
                f"values shape {values.shape} != ({len(indicators)}, {len(years)})"
            )
        missing = np.asarray(self.missing, dtype=bool)
        if missing.shape != values.shape:
            raise ValueError("missing mask shape does not match values")
        label = np.asarray(self.label)
        if label.shape != (len(years),):
            raise ValueError("label length does not match years")
        if not np.isin(label, (0, 1)).all():
            raise DomainError("label values must be 0 or 1")
        if len(set(indicators)) != len(indicators):
            raise ValueError("indicator names must be unique")
        if LABEL in indicators:
            raise ValueError(f"{LABEL!r} is reserved and cannot be an indicator name")
        # Missing cells hold NaN so stray arithmetic is poisoned; the mask stays authoritative.
        values = np.where(missing, np.nan, values)
        object.__setattr__(self, "indicators", indicators)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "values", _frozen(values, float))
        object.__setattr__(self, "missing", _frozen(missing, bool))
        object.__setattr__(self, "label", _frozen(label, np.int8))

    @classmethod
    def from_array(cls, country_id, indicators, years, values, label):
        """Build a panel treating NaN entries of ``values`` as missing."""
        values = np.asarray(values, dtype=float)
        return cls(country_id, tuple(indicators), tuple(years), values, np.isnan(values), label)

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_complete(self) -> bool:
        return not self.missing.any()

    def index(self, indicator: str) -> int:
        return self.indicators.index(indicator)

    def series(self, indicator: str) -> np.ndarray:
        if indicator == LABEL:
            return self.label.astype(float)
        return self.values[self.index(indicator)]

    def replace(self, **changes) -> "CountryPanel":
        kw = dict(
            country_id=self.country_id,
            indicators=self.indicators,
            years=self.years,
            values=self.values,
            missing=self.missing,
            label=self.label,
        )
        kw.update(changes)
        return CountryPanel(**kw)

    def select(self, indicators: Sequence[str]) -> "CountryPanel":
        idx = [self.index(name) for name in indicators]
        return self.replace(
            indicators=tuple(indicators),
            values=self.values[idx],
            missing=self.missing[idx],
        )

    def drop(self, indicators: Iterable[str]) -> "CountryPanel":
        gone = set(indicators)
        return self.select([n for n in self.indicators if n not in gone])

    def slice_years(self, start: int) -> "CountryPanel":
        """Keep year columns from position ``start`` onwards."""
        return self.replace(
            years=self.years[start:],
            values=self.values[:, start:],
            missing=self.missing[:, start:],
            label=self.label[start:],
        )

    def __eq__(self, other):
        if not isinstance(other, CountryPanel):
            return NotImplemented
        return (
            self.country_id == other.country_id
            and self.indicators == other.indicators
            and self.years == other.years
            and np.array_equal(self.missing, other.missing)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.label, other.label)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PanelDataset:
    countries: tuple
    indicator_names: tuple
    year_range: tuple
    dropped: tuple = ()
    warnings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "indicator_names", tuple(self.indicator_names))
        object.__setattr__(self, "year_range", (int(self.year_range[0]), int(self.year_range[1])))
        object.__setattr__(self, "dropped", tuple(self.dropped))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if len(set(self.indicator_names)) != len(self.indicator_names):
            raise ValueError("indicator names must be unique")
        if LABEL in self.indicator_names:
            raise ValueError(f"{LABEL!r} is reserved")
        years = self.years
        ids = [c.country_id for c in self.countries]
        if len(set(ids)) != len(ids):
            raise ValueError("country ids must be unique")
        for c in self.countries:
            if c.indicators != self.indicator_names or c.years != years:
                raise ValueError(f"country {c.country_id!r} does not match the panel layout")

    @property
    def years(self) -> tuple:
        return tuple(range(self.year_range[0], self.year_range[1] + 1))

    @property
    def country_ids(self) -> tuple:
        return tuple(c.country_id for c in self.countries)

    def country(self, country_id: str) -> CountryPanel:
        for c in self.countries:
            if c.country_id == country_id:
                return c
        raise KeyError(country_id)

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.indicator_names == other.indicator_names
            and self.year_range == other.year_range
            and self.countries == other.countries
        )

    __hash__ = None


@dataclass(frozen=True)
class MissingnessReport:
    per_indicator_fraction: dict
    overall_fraction: float


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise ParseError("file is empty; a header row is required", path, 1)
    return fh, reader, [h.strip() for h in header]


def _column_index(header, required, path):
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"header lacks required columns {missing}", path, 1)
    return [header.index(c) for c in required]


def _parse_year(text, path, line):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"invalid year {text!r}", path, line) from None


def _parse_value(text, path, line):
    text = text.strip()
    if text == "":
        return None
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"invalid numeric value {text!r}", path, line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", path, line)
    return v


def _read_long(path):
    cells = {}
    country_order, indicator_order, years = [], [], set()
    seen_c, seen_i = set(), set()
    fh, reader, header = _read_rows(path)
    with fh:
        idx = _column_index(header, LONG_HEADER, path)
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, line)
            country, year, indicator, value = (row[i] for i in idx)
            country, indicator = country.strip(), indicator.strip()
            if not country or not indicator:
                raise ParseError("empty country or indicator", path, line)
            if indicator == LABEL:
                raise ParseError(f"{LABEL!r} is a reserved name", path, line)
            y = _parse_year(year, path, line)
            key = (country, y, indicator)
            if key in cells:
                raise DuplicateKeyError(f"duplicate key {key}", path, line)
            cells[key] = _parse_value(value, path, line)
            years.add(y)
            if country not in seen_c:
                seen_c.add(country)
                country_order.append(country)
            if indicator not in seen_i:
                seen_i.add(indicator)
                indicator_order.append(indicator)
    return cells, country_order, indicator_order, years


def _country_file_name(country_id):
    return quote(country_id, safe=" ().,-_'&") + ".csv"


def _read_wide(directory):
    cells = {}
    country_order, indicator_order, years = [], [], set()
    seen_i = set()
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix == ".csv")
    for path in files:
        country = unquote(path.stem)
        country_order.append(country)
        fh, reader, header = _read_rows(path)
        with fh:
            if not header or header[0] != "indicator":
                raise ParseError("first header column must be 'indicator'", path, 1)
            file_years = [_parse_year(h, path, 1) for h in header[1:]]
            if len(set(file_years)) != len(file_years):
                raise DuplicateKeyError("duplicate year column", path, 1)
            years.update(file_years)
            seen_here = set()
            for row in reader:
                line = reader.line_num
                if not row or all(not f.strip() for f in row):
                    continue
                if len(row) != len(header):
                    raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, line)
                indicator = row[0].strip()
                if indicator == LABEL:
                    raise ParseError(f"{LABEL!r} is a reserved name", path, line)
                if indicator in seen_here:
                    raise DuplicateKeyError(f"duplicate indicator {indicator!r}", path, line)
                seen_here.add(indicator)
                if indicator not in seen_i:
                    seen_i.add(indicator)
                    indicator_order.append(indicator)
                for y, text in zip(file_years, row[1:]):
                    cells[(country, y, indicator)] = _parse_value(text, path, line)
    return cells, country_order, indicator_order, years


def _read_labels(path):
    labels = {}
    fh, reader, header = _read_rows(path)
    with fh:
        idx = _column_index(header, LABEL_HEADER, path)
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, line)
            country, year, value = (row[i].strip() for i in idx)
            y = _parse_year(year, path, line)
            try:
                v = float(value)
            except ValueError:
                raise ParseError(f"invalid label {value!r}", path, line) from None
            if v not in (0.0, 1.0):
                raise DomainError(f"label must be 0 or 1, got {value!r}", path, line)
            if (country, y) in labels:
                raise DuplicateKeyError(f"duplicate label key {(country, y)}", path, line)
            labels[(country, y)] = int(v)
    return labels


def ingest(path, layout: str = "long", label_path=None) -> PanelDataset:
    """Read a panel from CSV.

    ``layout="long"`` expects one file with ``country,year,indicator,value``;
    ``layout="wide"`` expects a directory with one ``<country>.csv`` per country
    (indicators as rows, years as columns). Years absent for a country become
    all-missing columns; label years absent from ``label_path`` default to 0
    and are reported in ``PanelDataset.warnings``.
    """
    if layout == "long":
        cells, countries, indicators, years = _read_long(path)
    elif layout == "wide":
        cells, countries, indicators, years = _read_wide(path)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    labels = _read_labels(label_path) if label_path is not None else {}
    warnings = []
    if not years:
        raise ParseError("no data rows", path)
    start, end = min(years), max(years)
    all_years = list(range(start, end + 1))
    panels = []
    for country in countries:
        values = np.full((len(indicators), len(all_years)), np.nan)
        for i, ind in enumerate(indicators):
            for t, y in enumerate(all_years):
                v = cells.get((country, y, ind))
                if v is not None:
                    values[i, t] = v
        label = np.zeros(len(all_years), dtype=np.int8)
        absent = []
        for t, y in enumerate(all_years):
            if (country, y) in labels:
                label[t] = labels[(country, y)]
            else:
                absent.append(y)
        if absent:
            warnings.append(
                f"{country}: no label for years {absent}; defaulted to 0"
            )
        panels.append(CountryPanel.from_array(country, indicators, all_years, values, label))
    known = set(countries)
    stray = sorted({c for c, y in labels if c not in known or y < start or y > end})
    if stray:
        warnings.append(f"label rows ignored for countries/years outside the panel: {stray}")
    return PanelDataset(tuple(panels), tuple(indicators), (start, end), warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# export


def write_labels(data: PanelDataset, label_path) -> None:
    with open(label_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_HEADER)
        for c in data.countries:
            for y, lab in zip(c.years, c.label):
                w.writerow((c.country_id, y, int(lab)))


def write_long(data: PanelDataset, path, label_path=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_HEADER)
        for c in data.countries:
            for t, y in enumerate(c.years):
                for i, ind in enumerate(c.indicators):
                    cell = "" if c.missing[i, t] else format_number(c.values[i, t])
                    w.writerow((c.country_id, y, ind, cell))
    if label_path is not None:
        write_labels(data, label_path)


def write_wide(data: PanelDataset, directory, label_path=None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for c in data.countries:
        with open(directory / _country_file_name(c.country_id), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("indicator",) + tuple(str(y) for y in c.years))
            for i, ind in enumerate(c.indicators):
                w.writerow(
                    (ind,)
                    + tuple("" if c.missing[i, t] else format_number(c.values[i, t])
                            for t in range(len(c.years)))
                )
    if label_path is not None:
        write_labels(data, label_path)


# ---------------------------------------------------------------------------
# missingness


def missingness(data: PanelDataset) -> MissingnessReport:
    n_ind = len(data.indicator_names)
    if not data.countries or n_ind == 0:
        return MissingnessReport({name: 0.0 for name in data.indicator_names}, 0.0)
    counts = np.zeros(n_ind)
    for c in data.countries:
        counts += c.missing.sum(axis=1)
    cells_per_indicator = len(data.countries) * len(data.years)
    per = {name: float(counts[i] / cells_per_indicator) for i, name in enumerate(data.indicator_names)}
    overall = float(counts.sum() / (cells_per_indicator * n_ind))
    return MissingnessReport(per, overall)


def drop_sparse(data: PanelDataset, threshold: float = DEFAULT_SPARSE_THRESHOLD) -> PanelDataset:
    """Remove indicators whose global missing fraction exceeds ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    report = missingness(data)
    gone = [n for n in data.indicator_names if report.per_indicator_fraction[n] > threshold]
    if not gone:
        return data
    keep = [n for n in data.indicator_names if n not in gone]
    return PanelDataset(
        tuple(c.select(keep) for c in data.countries),
        tuple(keep),
        data.year_range,
        dropped=data.dropped + tuple(gone),
        warnings=data.warnings,
    )


def dataset_from_panels(panels: Sequence[CountryPanel], warnings=()) -> PanelDataset:
    """Assemble a dataset from panels sharing one layout."""
    if not panels:
        raise ValueError("at least one country panel is required")
    first = panels[0]
    return PanelDataset(tuple(panels), first.indicators, (first.years[0], first.years[-1]),
                        warnings=tuple(warnings))
