"""CSV persistence for panels, ground-truth sidecars and covariate matrices"""
import logging

import numpy as np
import pandas as pd

from src.common.errors import PreconditionError, SchemaError
from src.dataset.panel import GroundTruth, PanelDataset

logger = logging.getLogger(__name__)

BASE_COLUMNS = ["g", "a", "s", "y"]
TRUTH_COLUMNS = ["tau", "s0", "s1", "y0", "y1"]


def panel_header(d):
    return BASE_COLUMNS + [f"x{j}" for j in range(d)]


def _format_floats(values):
    # repr of a Python float is the shortest string that parses back bit-exactly
    return [repr(float(v)) for v in values]


def _read_table(path):
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SchemaError(f"malformed CSV {path}: {e}")


def _parse_float(text):
    # float() is correctly rounded; pandas' fast parser is not, which breaks repr round trips
    try:
        return float(text)
    except ValueError:
        return np.nan


def _numeric(frame, column):
    """Parse a column; unparseable and empty cells become NaN"""
    return frame[column].map(_parse_float).to_numpy(dtype=float)


def load_csv(path) -> PanelDataset:
    """Read and validate a panel file, preserving row order"""
    frame = _read_table(path)
    columns = list(frame.columns)
    d = len(columns) - len(BASE_COLUMNS)
    if d < 1 or columns != panel_header(d):
        raise SchemaError(f"malformed header {','.join(columns)}: expected g,a,s,y,x0,...")

    g = frame["g"].str.strip().to_numpy()
    a = _numeric(frame, "a")
    bad_a = ~np.isin(a, (0.0, 1.0))
    if bad_a.any():
        row = int(np.flatnonzero(bad_a)[0]) + 1
        raise SchemaError(f"non-binary a at row {row}", row=row)

    y_text = frame["y"].str.strip()
    y = np.where(y_text == "", np.nan, _numeric(frame, "y"))
    # a non-empty y cell that fails to parse is non-finite, not missing
    unparsed = (y_text != "").to_numpy() & np.isnan(y)
    y = np.where(unparsed, np.inf, y)

    x = np.column_stack([_numeric(frame, f"x{j}") for j in range(d)])
    dataset = PanelDataset.from_arrays(g=g, a=a.astype(int), x=x, s=_numeric(frame, "s"), y=y)
    logger.info(f"Loaded {dataset.n} rows (d={dataset.d}) from {path}")
    return dataset


def write_csv(dataset: PanelDataset, path):
    """Write a panel; experimental rows get an empty y field"""
    if dataset.n < 1:
        raise PreconditionError("cannot write an empty dataset")

    y_mask = np.ma.getmaskarray(dataset.y)
    y_data = dataset.y.filled(0.0)
    frame = pd.DataFrame(
        {
            "g": dataset.g,
            "a": dataset.a.astype(int).astype(str),
            "s": _format_floats(dataset.s),
            "y": ["" if missing else repr(float(v)) for v, missing in zip(y_data, y_mask)],
        }
    )
    for j in range(dataset.d):
        frame[f"x{j}"] = _format_floats(dataset.x[:, j])

    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        logger.error(f"Failed to write dataset to {path}: {e}")
        raise
    logger.info(f"Wrote {dataset.n} rows to {path}")


def write_truth(truth: GroundTruth, path):
    """Write the row-aligned ground-truth sidecar"""
    frame = pd.DataFrame({c: _format_floats(getattr(truth, c)) for c in truth.columns})
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        logger.error(f"Failed to write truth to {path}: {e}")
        raise


def load_truth(path) -> GroundTruth:
    frame = _read_table(path)
    columns = list(frame.columns)
    if columns not in (["tau"], TRUTH_COLUMNS):
        raise SchemaError(f"malformed truth header {','.join(columns)}: expected tau[,s0,s1,y0,y1]")

    values = {c: _numeric(frame, c) for c in columns}
    for c, v in values.items():
        bad = ~np.isfinite(v)
        if bad.any():
            row = int(np.flatnonzero(bad)[0]) + 1
            raise SchemaError(f"non-finite {c} at row {row}", row=row)
    return GroundTruth(**values)


def load_covariates(path) -> np.ndarray:
    """Numeric covariate matrix from a headerless or headered CSV"""
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SchemaError(f"malformed covariate file {path}: {e}")

    first = frame.iloc[0].map(_parse_float)
    if first.isna().any():
        frame = frame.iloc[1:]
    if frame.shape[0] == 0:
        raise SchemaError(f"covariate file {path} has no data rows")

    matrix = frame.apply(lambda col: col.map(_parse_float)).to_numpy(dtype=float)
    bad = ~np.isfinite(matrix).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0]) + 1
        raise SchemaError(f"non-finite covariate at row {row}", row=row)

    logger.info(f"Loaded covariates {matrix.shape} from {path}")
    return matrix
