"""Report persistence: CSV record tables and JSON documents with a fixed schema

JSON layout:
    {
      "config":  {...experiment echo...},
      "records": [{"estimator", "preset", "n_e", "n_o", "seed",
                   "pehe", "ate_error", "wall_ms", "split"}, ...],
      "summary": {...per-cell statistics and experiment-level results...}
    }
CSV files hold one record per row in RECORD_COLUMNS order, minus wall_ms.
"""
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from src.common.errors import PreconditionError, SchemaError
from src.harness.experiments import ExperimentReport
from src.metrics.evaluation import RECORD_COLUMNS, MetricRecord

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "json")
CSV_COLUMNS = [c for c in RECORD_COLUMNS if c != "wall_ms"]
FIELD_TYPES = {
    "estimator": str,
    "preset": str,
    "split": str,
    "n_e": int,
    "n_o": int,
    "seed": int,
    "pehe": float,
    "ate_error": float,
    "wall_ms": float,
}


def _to_builtin(value):
    """json.dump hook for numpy scalars and arrays"""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _type_ok(value, kind):
    if isinstance(value, bool):
        return False
    if kind is float:
        return isinstance(value, (int, float))
    return isinstance(value, kind)


def validate_report_dict(doc) -> None:
    """Raise SchemaError unless doc follows the report layout"""
    if not isinstance(doc, dict) or set(doc) != {"config", "records", "summary"}:
        raise SchemaError("report must have exactly the keys config, records, summary")
    if not isinstance(doc["config"], dict) or not isinstance(doc["summary"], dict):
        raise SchemaError("config and summary must be objects")
    if not isinstance(doc["records"], list) or not doc["records"]:
        raise SchemaError("records must be a non-empty list")
    for i, record in enumerate(doc["records"], start=1):
        if not isinstance(record, dict) or set(record) != set(RECORD_COLUMNS):
            raise SchemaError(f"record {i} must have exactly the fields {', '.join(RECORD_COLUMNS)}", row=i)
        for name, kind in FIELD_TYPES.items():
            if not _type_ok(record[name], kind):
                raise SchemaError(f"record {i}: field {name} must be {kind.__name__}", row=i)


def _resolve_format(path, fmt):
    fmt = fmt or Path(path).suffix.lstrip(".").lower()
    if fmt not in REPORT_FORMATS:
        raise PreconditionError(f"unknown report format '{fmt}', expected one of {REPORT_FORMATS}")
    return fmt


def emit_report(report: ExperimentReport, path, fmt=None) -> Path:
    """Write a report as CSV or JSON (format from fmt or the file suffix)"""
    if not report.records:
        raise PreconditionError("refusing to write an empty report")
    fmt = _resolve_format(path, fmt)
    path = Path(path)

    try:
        if fmt == "json":
            doc = json.loads(json.dumps(report.to_dict(), default=_to_builtin))
            validate_report_dict(doc)
            path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        else:
            frame = pd.DataFrame([r.to_dict() for r in report.records], columns=CSV_COLUMNS)
            for column in ("pehe", "ate_error"):
                frame[column] = [repr(float(v)) for v in frame[column]]
            frame.to_csv(path, index=False, encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write {fmt} report to {path}: {e}")
        raise

    logger.info(f"Wrote {len(report.records)} records to {path}")
    return path


def emit_reports(report: ExperimentReport, out_dir, stem, formats=REPORT_FORMATS):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [emit_report(report, out_dir / f"{stem}.{fmt}", fmt) for fmt in formats]


def _record(values) -> MetricRecord:
    return MetricRecord(**{name: FIELD_TYPES[name](values[name]) for name in values})


def load_report_json(path) -> ExperimentReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed report {path}: {e}")
    validate_report_dict(doc)
    return ExperimentReport(config=doc["config"], records=[_record(r) for r in doc["records"]], summary=doc["summary"])


def load_report_csv(path) -> ExperimentReport:
    """Records only; config and summary are not part of the CSV form"""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SchemaError(f"malformed report {path}: {e}")
    if list(frame.columns) != CSV_COLUMNS:
        raise SchemaError(f"malformed report header {','.join(frame.columns)}")
    if frame.shape[0] == 0:
        raise SchemaError(f"report {path} has no records")

    records = []
    for i, row in enumerate(frame.to_dict(orient="records"), start=1):
        try:
            records.append(_record(row))
        except ValueError as e:
            raise SchemaError(f"record {i}: {e}", row=i)
    return ExperimentReport(config={}, records=records)
