import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stablekrylov.linalg import CsrMatrix
from stablekrylov.mmio import (
    BannerError,
    EntryCountError,
    IndexRangeError,
    MatrixMarketError,
    MmHeader,
    UnsupportedFieldError,
    read_matrix_market,
    write_matrix_market,
)


def load(text: str) -> CsrMatrix:
    return read_matrix_market(io.BytesIO(text.encode()))


def test_coordinate_general():
    m = load("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 2.0\n2 2 3.0\n")
    np.testing.assert_array_equal(m.to_dense(), np.diag([2.0, 3.0]))


def test_symmetric_expansion():
    m = load("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1.0\n2 1 5.0\n")
    np.testing.assert_array_equal(m.to_dense(), [[1.0, 5.0], [5.0, 0.0]])


def test_skew_symmetric_expansion():
    m = load("%%MatrixMarket matrix coordinate real skew-symmetric\n3 3 1\n3 1 2.5\n")
    d = m.to_dense()
    assert d[2, 0] == 2.5 and d[0, 2] == -2.5


def test_pattern_and_integer_fields():
    m = load("%%MatrixMarket matrix coordinate pattern general\n2 3 2\n1 3\n2 1\n")
    np.testing.assert_array_equal(m.to_dense(), [[0, 0, 1], [1, 0, 0]])
    m = load("%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 -7\n")
    assert m.to_dense()[0, 0] == -7.0


def test_array_format_column_major():
    m = load("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n")
    np.testing.assert_array_equal(m.to_dense(), [[1, 3], [2, 4]])


def test_array_symmetric():
    m = load("%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n")
    np.testing.assert_array_equal(m.to_dense(), [[1, 2], [2, 3]])


def test_case_insensitive_banner_comments_blank_lines():
    text = ("%%matrixmarket MATRIX Coordinate REAL General\n% comment\n\n2 2 1\n"
            "% another comment\n\n2 1 4.5\n")
    np.testing.assert_array_equal(load(text).to_dense(), [[0, 0], [4.5, 0]])


def test_duplicates_summed():
    a = load("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 1.25\n1 2 2.5\n")
    b = load("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 3.75\n")
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.col_idx, b.col_idx)


@pytest.mark.parametrize("text,exc,line", [
    ("%%MatrixMarket matrix coordinate\n", BannerError, 1),
    ("hello\n", BannerError, 1),
    ("", BannerError, 1),
    ("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n", UnsupportedFieldError, 1),
    ("%%MatrixMarket matrix array pattern general\n1 1\n", UnsupportedFieldError, 1),
    ("%%MatrixMarket vector coordinate real general\n", BannerError, 1),
    ("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n2 2 1\n", EntryCountError, 4),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1\n2 2 1\n", EntryCountError, 4),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n", IndexRangeError, 3),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n0 1 1\n", IndexRangeError, 3),
    ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", MatrixMarketError, 3),
    ("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n", EntryCountError, 5),
])
def test_errors_carry_line_numbers(text, exc, line):
    with pytest.raises(exc) as info:
        load(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_header_validation():
    with pytest.raises(UnsupportedFieldError):
        MmHeader("coordinate", "complex", "general")
    with pytest.raises(BannerError):
        MmHeader("coordinate", "real", "hermitian")


def roundtrip(m: CsrMatrix) -> CsrMatrix:
    buf = io.BytesIO()
    write_matrix_market(m, buf)
    return read_matrix_market(io.BytesIO(buf.getvalue()))


def assert_same_csr(a: CsrMatrix, b: CsrMatrix):
    assert (a.rows, a.cols) == (b.rows, b.cols)
    np.testing.assert_array_equal(a.row_ptr, b.row_ptr)
    np.testing.assert_array_equal(a.col_idx, b.col_idx)
    assert a.values.tobytes() == b.values.tobytes()


def test_write_diag_format():
    buf = io.BytesIO()
    write_matrix_market(CsrMatrix.from_dense(np.diag([2.0, 3.0])), buf)
    lines = buf.getvalue().decode().splitlines()
    assert lines[0] == "%%MatrixMarket matrix coordinate real general"
    assert lines[1] == "2 2 2"
    assert lines[2].startswith("1 1 2")


def test_roundtrip_random_sparse():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((20, 20)) * 10.0 ** rng.uniform(-300, 300, (20, 20))
    a[rng.random((20, 20)) > 0.2] = 0.0
    m = CsrMatrix.from_dense(a)
    assert_same_csr(roundtrip(m), m)


def test_roundtrip_empty_rows():
    a = np.zeros((5, 4))
    a[1, 3] = -1e-310  # subnormal survives too
    a[4, 0] = np.pi
    m = CsrMatrix.from_dense(a)
    assert_same_csr(roundtrip(m), m)


def test_write_rejects_nonfinite():
    m = CsrMatrix.from_dense(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        write_matrix_market(m, io.BytesIO())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=30),
       st.integers(0, 2**31))
def test_roundtrip_property(vals, seed):
    rng = np.random.default_rng(seed)
    n = 6
    i = rng.integers(0, n, len(vals))
    j = rng.integers(0, n, len(vals))
    # keep one entry per coordinate so the matrix is exactly what we wrote
    _, first = np.unique(i * n + j, return_index=True)
    m = CsrMatrix.from_coo(n, n, i[first], j[first], np.array(vals)[first])
    assert_same_csr(roundtrip(m), m)


def test_symmetric_file_matvec_matches_mirrored_dense():
    rng = np.random.default_rng(1)
    n = 12
    lines, dense = [], np.zeros((n, n))
    for r in range(n):
        for c in range(r + 1):
            if rng.random() < 0.4 or r == c:
                v = rng.standard_normal()
                lines.append(f"{r + 1} {c + 1} {v!r}")
                dense[r, c] = dense[c, r] = v
    text = "%%MatrixMarket matrix coordinate real symmetric\n" + f"{n} {n} {len(lines)}\n" + "\n".join(lines) + "\n"
    m = load(text)
    for _ in range(20):
        v = rng.standard_normal(n)
        ref = dense @ v
        assert np.linalg.norm(m.matvec(v) - ref) <= 1e-15 * np.linalg.norm(ref) * n


def test_read_from_path_and_bytes(tmp_path):
    text = "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 4\n"
    p = tmp_path / "a.mtx"
    p.write_text(text)
    assert read_matrix_market(str(p)).to_dense()[0, 0] == 4.0
    assert read_matrix_market(text.encode()).to_dense()[0, 0] == 4.0
