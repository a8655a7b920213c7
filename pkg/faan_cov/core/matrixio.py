# matrixio.py

# File formats
# - matrix CSV: no header, one row per line, "." decimal separator
# - returns CSV: header row of asset ids, one row per trading day
# - reports: JSON with sorted keys, tables: CSV via pandas

import csv
import io
import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from faan_cov.core.covmodel import SampleCov
from faan_cov.errors import InvalidInputError, MatrixFormatError

Grid = list[list[float]]


def load_csv_grid(csv_file: Path) -> Grid:
    """Load a CSV file into a 2D grid of floats. Blank lines are skipped."""
    grid: Grid = []
    with open(csv_file, newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        try:
            for lineno, row in enumerate(reader, start=1):
                if not any(cell.strip() for cell in row):
                    continue
                try:
                    grid.append([float(x) for x in row])
                except ValueError as exc:
                    raise MatrixFormatError(f"{csv_file}:{lineno}: {exc}") from exc
        except UnicodeDecodeError as exc:
            raise MatrixFormatError(f"{csv_file}: not UTF-8 text ({exc.reason})") from exc
    return grid


def read_matrix_csv(path: Path | str) -> NDArray[np.float64]:
    grid = load_csv_grid(Path(path))
    if not grid:
        raise MatrixFormatError(f"{path}: no rows")
    width = len(grid[0])
    for lineno, row in enumerate(grid, start=1):
        if len(row) != width:
            raise MatrixFormatError(
                f"{path}: row {lineno} has {len(row)} columns, expected {width}"
            )
    return np.array(grid, dtype=np.float64)


def read_scm_csv(path: Path | str) -> SampleCov:
    """Read a square matrix file as a SampleCov (symmetrized on ingest)."""
    m = read_matrix_csv(path)
    if m.shape[0] != m.shape[1]:
        raise MatrixFormatError(f"{path}: matrix is {m.shape[0]}x{m.shape[1]}, not square")
    return SampleCov(m)


def write_matrix_csv(path: Path | str | None, m: ArrayLike) -> str:
    """Write with round-trip float precision; returns the CSV text."""
    arr = np.atleast_2d(np.asarray(m, dtype=np.float64))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    for row in arr:
        writer.writerow([repr(float(x)) for x in row])
    text = buffer.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_returns_csv(path: Path | str) -> pd.DataFrame:
    """Returns table: columns are assets, rows are trading days."""
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise MatrixFormatError(f"{path}: unreadable returns file ({exc})") from exc
    if frame.empty:
        raise InvalidInputError(f"{path}: no returns rows")
    try:
        frame = frame.astype(np.float64)
    except ValueError as exc:
        raise MatrixFormatError(f"{path}: non-numeric returns ({exc})") from exc
    if not np.all(np.isfinite(frame.to_numpy())):
        raise InvalidInputError(f"{path}: returns contain missing or non-finite values")
    return frame


def dump_json(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_json_report(path: Path | str | None, report: dict[str, Any]) -> str:
    """Serialize a report; writes it when a path is given and returns the text."""
    text = dump_json(report)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def write_table_csv(path: Path | str | None, table: pd.DataFrame) -> str:
    text = table.to_csv(index=False, lineterminator="\n")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
