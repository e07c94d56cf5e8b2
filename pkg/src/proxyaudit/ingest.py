"""CSV ingestion for decision records and composition tables.

Column mapping lives in an INI file read with :mod:`configparser`::

    [columns]
    outcome = action_taken
    geo = state_code, county_code, census_tract   ; concatenated in this order
    geo_separator =                                ; empty: plain concatenation
    class = derived_race                           ; optional

    [outcome_coding]          ; raw value = 1, 0 or skip
    1 = 1
    2 = 1
    3 = 0

    [class_coding]            ; raw value = class label, or skip
    White = white

    [options]
    skip_unmapped_outcome = true
    skip_unmapped_class = false

Geo keys stay strings; leading zeros are significant.
"""
from __future__ import annotations

import configparser
import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from proxyaudit import _io
from proxyaudit.domain import ConfigurationError, DataError, LabelUniverse, SchemaError
from proxyaudit.proxy import COMPOSITION_SUM_TOL, CompositionTable, LikelihoodTable, RawRecord

SKIP = "skip"
DEFAULT_OUTCOME_CODING = {"1": 1, "2": 1, "3": 0}


@dataclass(frozen=True)
class ColumnMap:
    outcome_column: str = "action_taken"
    outcome_coding: Mapping[str, int | str] = field(default_factory=lambda: dict(DEFAULT_OUTCOME_CODING))
    geo_columns: tuple[str, ...] = ("state_code", "county_code", "census_tract")
    geo_separator: str = ""
    class_column: str | None = None
    class_coding: Mapping[str, str] | None = None
    skip_unmapped_outcome: bool = True
    skip_unmapped_class: bool = False

    def __post_init__(self) -> None:
        if not self.geo_columns:
            raise ConfigurationError("at least one geo column is required")
        object.__setattr__(self, "geo_columns", tuple(self.geo_columns))
        codes = set(self.outcome_coding.values())
        bad = codes - {0, 1, SKIP}
        if bad:
            raise ConfigurationError(f"outcome codes must map to 1, 0 or skip; got {sorted(map(str, bad))}")
        if 1 not in codes or 0 not in codes:
            raise ConfigurationError("outcome coding must declare both favorable (1) and unfavorable (0) codes")

    @property
    def required_columns(self) -> tuple[str, ...]:
        cols = (self.outcome_column,) + self.geo_columns
        return cols + ((self.class_column,) if self.class_column else ())


def _parse_bool(text: str, name: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"option {name}: expected a boolean, got {text!r}")


def load_column_map(path) -> ColumnMap:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # raw codes are case-sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    kw: dict = {}
    if parser.has_section("columns"):
        cols = parser["columns"]
        if "outcome" in cols:
            kw["outcome_column"] = cols["outcome"].strip()
        if "geo" in cols:
            kw["geo_columns"] = tuple(c.strip() for c in cols["geo"].split(",") if c.strip())
        if "geo_separator" in cols:
            kw["geo_separator"] = cols["geo_separator"].strip()
        if cols.get("class", "").strip():
            kw["class_column"] = cols["class"].strip()
    if parser.has_section("outcome_coding"):
        coding: dict[str, int | str] = {}
        for raw, val in parser["outcome_coding"].items():
            val = val.strip().lower()
            if val not in ("0", "1", SKIP):
                raise ConfigurationError(f"outcome code {raw!r} must map to 1, 0 or skip, not {val!r}")
            coding[raw.strip()] = SKIP if val == SKIP else int(val)
        kw["outcome_coding"] = coding
    if parser.has_section("class_coding"):
        kw["class_coding"] = {raw.strip(): val.strip() for raw, val in parser["class_coding"].items()}
    if parser.has_section("options"):
        opts = parser["options"]
        for name in ("skip_unmapped_outcome", "skip_unmapped_class"):
            if name in opts:
                kw[name] = _parse_bool(opts[name], name)
    return ColumnMap(**kw)


@dataclass
class IngestReport:
    total: int = 0
    loaded: int = 0
    skipped: Counter = field(default_factory=Counter)
    rejected: Counter = field(default_factory=Counter)
    first_errors: list[str] = field(default_factory=list)

    @property
    def skipped_count(self) -> int:
        return sum(self.skipped.values())

    @property
    def rejected_count(self) -> int:
        return sum(self.rejected.values())

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "loaded": self.loaded,
            "skipped": self.skipped_count,
            "rejected": self.rejected_count,
            "skipped_reasons": dict(sorted(self.skipped.items())),
            "rejected_reasons": dict(sorted(self.rejected.items())),
            "first_errors": list(self.first_errors),
        }

    def _reject(self, line: int, reason: str, detail: str, strict: bool) -> None:
        if strict:
            raise DataError(f"line {line}: {detail}")
        self.rejected[reason] += 1
        if len(self.first_errors) < 20:
            self.first_errors.append(f"line {line}: {detail}")


def _open_csv(path):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return fh


def load_records(path, cmap: ColumnMap | None = None, strict: bool = False) -> tuple[list[RawRecord], IngestReport]:
    """Parse decision rows in file order.

    Rows with an outcome or class code the mapping declares (or is configured
    to treat) as skip are counted as skipped; rows that cannot be parsed are
    counted as rejected, or abort the load when ``strict``.
    """
    cmap = cmap or ColumnMap()
    report = IngestReport()
    rows: list[RawRecord] = []
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        pos = {name.strip(): i for i, name in enumerate(header)}
        missing = [c for c in cmap.required_columns if c not in pos]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        width = len(header)
        yi = pos[cmap.outcome_column]
        gi = [pos[c] for c in cmap.geo_columns]
        ci = pos[cmap.class_column] if cmap.class_column else None
        for line, fields in enumerate(reader, start=2):
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            report.total += 1
            if len(fields) != width:
                report._reject(line, "field_count", f"expected {width} fields, found {len(fields)}", strict)
                continue
            raw_y = fields[yi].strip()
            code = cmap.outcome_coding.get(raw_y)
            if code is None:
                if raw_y and cmap.skip_unmapped_outcome and _looks_like_code(raw_y):
                    report.skipped[f"outcome:{raw_y}"] += 1
                else:
                    report._reject(line, "outcome", f"unmapped outcome value {raw_y!r}", strict)
                continue
            if code == SKIP:
                report.skipped[f"outcome:{raw_y}"] += 1
                continue
            parts = [fields[i].strip() for i in gi]
            if any(not p for p in parts):
                report._reject(line, "geo_missing", "empty geo field", strict)
                continue
            label = None
            if ci is not None:
                raw_c = fields[ci].strip()
                label = raw_c if cmap.class_coding is None else cmap.class_coding.get(raw_c)
                if label is None or label == SKIP:
                    if cmap.skip_unmapped_class or label == SKIP:
                        report.skipped[f"class:{raw_c}"] += 1
                    else:
                        report._reject(line, "class", f"unmapped class value {raw_c!r}", strict)
                    continue
            rows.append(RawRecord(float(code), cmap.geo_separator.join(parts), label))
            report.loaded += 1
    return rows, report


def _looks_like_code(text: str) -> bool:
    # a declared-skip policy covers unknown *codes*; free text is malformed
    return text.isdigit()


@dataclass
class CompositionReport:
    total: int = 0
    stored: int = 0
    renormalized: int = 0
    rejected: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "stored": self.stored,
            "renormalized": self.renormalized,
            "rejected": len(self.rejected),
            "rejected_rows": list(self.rejected),
        }


def load_composition(
    path, strict: bool = False, tol: float = COMPOSITION_SUM_TOL
) -> tuple[CompositionTable, CompositionReport]:
    """Read ``geo_key,<class...>`` rows; rows off the simplex by more than ``tol`` are rejected."""
    report = CompositionReport()
    raw: dict[str, list[float]] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        if len(header) < 3 or header[0] != "geo_key":
            raise SchemaError(f"{path}: header must be geo_key,<class1>,<class2>,...")
        try:
            universe = LabelUniverse(tuple(header[1:]))
        except ConfigurationError as exc:
            raise SchemaError(f"{path}: {exc}") from exc
        for line, fields in enumerate(reader, start=2):
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            report.total += 1
            key = fields[0].strip()
            problem = None
            vals: list[float] = []
            if len(fields) != len(header):
                problem = f"expected {len(header)} fields, found {len(fields)}"
            elif not key:
                problem = "empty geo_key"
            else:
                try:
                    vals = [float(v) for v in fields[1:]]
                except ValueError:
                    problem = "non-numeric proportion"
            if problem is None:
                if any(not math.isfinite(v) or v < 0 for v in vals):
                    problem = "proportions must be finite and nonnegative"
                else:
                    total = math.fsum(vals)
                    if abs(total - 1.0) > tol:
                        problem = f"proportions sum to {total:.6g}"
            if problem is not None:
                if strict:
                    raise DataError(f"{path} line {line}: {problem}")
                report.rejected.append(f"line {line} ({key or '?'}): {problem}")
                continue
            if key in raw:
                raise DataError(f"{path} line {line}: duplicate geo_key {key!r}")
            if math.fsum(vals) != 1.0:
                report.renormalized += 1
            raw[key] = vals
            report.stored += 1
    return CompositionTable.from_raw(universe, raw, tol=tol), report


def load_likelihood_table(path, feature: str, universe: LabelUniverse | None = None) -> LikelihoodTable:
    """Read ``feature_value,<class...>`` rows of P(value | class)."""
    rows: dict[str, tuple[float, ...]] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        if len(header) < 3 or header[0] != "feature_value":
            raise SchemaError(f"{path}: header must be feature_value,<class1>,<class2>,...")
        file_universe = LabelUniverse(tuple(header[1:]))
        if universe is not None and universe.labels != file_universe.labels:
            raise SchemaError(f"{path}: classes {file_universe.labels} differ from {universe.labels}")
        for line, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise DataError(f"{path} line {line}: expected {len(header)} fields")
            value = fields[0].strip()
            if value in rows:
                raise DataError(f"{path} line {line}: duplicate value {value!r}")
            try:
                rows[value] = tuple(float(v) for v in fields[1:])
            except ValueError:
                raise DataError(f"{path} line {line}: non-numeric likelihood") from None
    return LikelihoodTable(feature, file_universe, rows)


def write_composition(table: CompositionTable, path) -> Path:
    return _io.write_csv(
        path, ("geo_key",) + table.universe.labels, ((key,) + dist.probs for key, dist in table.rows.items())
    )
