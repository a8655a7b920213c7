import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from faan_cov.core.matrixio import (
    load_csv_grid,
    read_matrix_csv,
    read_returns_csv,
    read_scm_csv,
    write_json_report,
    write_matrix_csv,
    write_table_csv,
)
from faan_cov.errors import InvalidInputError, MatrixFormatError


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestMatrixCsv:
    def test_bundled_examples(self, fnm_matrix, faan_matrix):
        assert fnm_matrix.n == 6
        assert faan_matrix.n == 5
        assert faan_matrix.entries[0, 0] == 5.9022

    def test_blank_lines_are_skipped(self, tmp_path):
        path = write(tmp_path, "m.csv", "1,0.5\n\n0.5,2\n\n")
        assert load_csv_grid(path) == [[1.0, 0.5], [0.5, 2.0]]

    def test_ragged(self, tmp_path):
        path = write(tmp_path, "m.csv", "1,2\n3\n")
        with pytest.raises(MatrixFormatError, match="row 2"):
            read_matrix_csv(path)

    def test_non_numeric(self, tmp_path):
        path = write(tmp_path, "m.csv", "1,x\n2,3\n")
        with pytest.raises(MatrixFormatError, match=":1:"):
            read_matrix_csv(path)

    def test_empty(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            read_matrix_csv(write(tmp_path, "m.csv", "\n"))

    def test_non_square(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            read_scm_csv(write(tmp_path, "m.csv", "1,2,3\n4,5,6\n"))

    def test_asymmetric(self, tmp_path):
        with pytest.raises(InvalidInputError):
            read_scm_csv(write(tmp_path, "m.csv", "1,2\n3,4\n"))

    def test_not_utf8(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_bytes(b"\xff\xfe1,2\n")
        with pytest.raises(MatrixFormatError, match="UTF-8"):
            read_matrix_csv(path)

    def test_write_keeps_full_precision(self, tmp_path):
        m = np.array([[1 / 3, 2.0], [2.0, np.pi]])
        text = write_matrix_csv(tmp_path / "out.csv", m)
        assert text.splitlines()[0] == f"{1 / 3!r},2.0"
        assert np.array_equal(read_matrix_csv(tmp_path / "out.csv"), m)

    def test_write_without_path(self):
        assert write_matrix_csv(None, np.eye(2)) == "1.0,0.0\n0.0,1.0\n"


class TestReturnsCsv:
    def test_reads_frame(self, tmp_path):
        path = write(tmp_path, "r.csv", "a,b\n0.01,-0.02\n0.0,0.03\n")
        frame = read_returns_csv(path)
        assert list(frame.columns) == ["a", "b"]
        assert_allclose(frame.to_numpy(), [[0.01, -0.02], [0.0, 0.03]])

    def test_missing_values(self, tmp_path):
        with pytest.raises(InvalidInputError):
            read_returns_csv(write(tmp_path, "r.csv", "a,b\n0.01,\n0.0,0.03\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            read_returns_csv(write(tmp_path, "r.csv", "a,b\n0.01,up\n"))

    def test_header_only(self, tmp_path):
        with pytest.raises(InvalidInputError):
            read_returns_csv(write(tmp_path, "r.csv", "a,b\n"))

    def test_ragged_row(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            read_returns_csv(write(tmp_path, "r.csv", "a,b\n0.1,0.2\n0.3,0.4,0.5\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            read_returns_csv(write(tmp_path, "r.csv", ""))

    def test_not_utf8(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_bytes(b"a,b\n\xff\xfe,0.1\n")
        with pytest.raises(MatrixFormatError):
            read_returns_csv(path)


class TestReports:
    def test_json_is_sorted_and_written(self, tmp_path):
        path = tmp_path / "report.json"
        text = write_json_report(path, {"b": 1, "a": [1.5, 2]})
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(path.read_text()) == {"a": [1.5, 2], "b": 1}

    def test_table(self):
        frame = pd.DataFrame({"N": [40], "method": ["scm"], "rmse": [0.5]})
        assert write_table_csv(None, frame) == "N,method,rmse\n40,scm,0.5\n"
