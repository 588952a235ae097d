"""Matrix Market reader/writer producing :class:`~stablekrylov.linalg.CsrMatrix`.

Symmetric and skew-symmetric files are expanded to full storage on load,
pattern entries become 1.0 and repeated coordinates are summed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import BinaryIO, Union

import numpy as np

from .linalg import CsrMatrix

FORMATS = ("coordinate", "array")
FIELDS = ("real", "integer", "pattern")
SYMMETRIES = ("general", "symmetric", "skew-symmetric")


class MatrixMarketError(ValueError):
    """Base class for parse errors; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class BannerError(MatrixMarketError):
    pass


class UnsupportedFieldError(MatrixMarketError):
    pass


class EntryCountError(MatrixMarketError):
    pass


class IndexRangeError(MatrixMarketError):
    pass


@dataclass(frozen=True)
class MmHeader:
    format: str
    field: str
    symmetry: str
    object: str = "matrix"

    def __post_init__(self):
        if self.object != "matrix":
            raise BannerError(f"unsupported object {self.object!r}")
        if self.format not in FORMATS:
            raise BannerError(f"unsupported format {self.format!r}")
        if self.field not in FIELDS:
            raise UnsupportedFieldError(f"unsupported field {self.field!r}")
        if self.symmetry not in SYMMETRIES:
            raise BannerError(f"unsupported symmetry {self.symmetry!r}")
        if self.format == "array" and self.field == "pattern":
            raise UnsupportedFieldError("pattern field is not valid for array format")


def _parse_banner(line: str, lineno: int) -> MmHeader:
    parts = line.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise BannerError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", lineno)
    obj, fmt, field, sym = (p.lower() for p in parts[1:])
    if field in ("complex", "hermitian"):
        raise UnsupportedFieldError(f"field {field!r} is not supported", lineno)
    try:
        return MmHeader(fmt, field, sym, obj)
    except MatrixMarketError as exc:
        raise type(exc)(str(exc), lineno) from None


def _data_lines(text_lines, start: int):
    """Yield (lineno, tokens) for non-comment, non-blank lines after the banner."""
    for lineno, raw in enumerate(text_lines, start=start):
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        yield lineno, s.split()


def read_matrix_market(source: Union[BinaryIO, bytes, str]) -> CsrMatrix:
    """Parse a Matrix Market stream (binary file object, bytes, or path)."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, str):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    lines = data.decode("ascii", errors="replace").splitlines()
    if not lines:
        raise BannerError("empty input", 1)
    header = _parse_banner(lines[0], 1)
    body = _data_lines(lines[1:], start=2)

    try:
        size_line, size_tokens = next(body)
    except StopIteration:
        raise MatrixMarketError("missing size line", len(lines)) from None

    def ints(tokens, count, lineno):
        if len(tokens) != count:
            raise MatrixMarketError(f"expected {count} integers, got {len(tokens)} tokens", lineno)
        try:
            return [int(t) for t in tokens]
        except ValueError:
            raise MatrixMarketError(f"malformed integer in {' '.join(tokens)!r}", lineno) from None

    def value(tok, lineno):
        try:
            return float(int(tok)) if header.field == "integer" else float(tok)
        except ValueError:
            raise MatrixMarketError(f"malformed value {tok!r}", lineno) from None

    if header.format == "coordinate":
        rows, cols, nnz = ints(size_tokens, 3, size_line)
        per_entry = 2 if header.field == "pattern" else 3
        ii, jj, vv = [], [], []
        last_line = size_line
        for lineno, tokens in body:
            last_line = lineno
            if len(ii) == nnz:
                raise EntryCountError(f"more than the declared {nnz} entries", lineno)
            if len(tokens) != per_entry:
                raise MatrixMarketError(f"expected {per_entry} tokens per entry, got {len(tokens)}", lineno)
            i, j = ints(tokens[:2], 2, lineno)
            if not (1 <= i <= rows and 1 <= j <= cols):
                raise IndexRangeError(f"index ({i}, {j}) outside {rows}x{cols}", lineno)
            ii.append(i - 1)
            jj.append(j - 1)
            vv.append(1.0 if header.field == "pattern" else value(tokens[2], lineno))
        if len(ii) != nnz:
            raise EntryCountError(f"declared {nnz} entries, found {len(ii)}", last_line)
    else:
        rows, cols = ints(size_tokens, 2, size_line)
        if header.symmetry == "general":
            slots = [(i, j) for j in range(cols) for i in range(rows)]
        elif header.symmetry == "symmetric":
            slots = [(i, j) for j in range(cols) for i in range(j, rows)]
        else:
            slots = [(i, j) for j in range(cols) for i in range(j + 1, rows)]
        ii, jj, vv = [], [], []
        last_line = size_line
        for lineno, tokens in body:
            last_line = lineno
            for tok in tokens:
                if len(vv) == len(slots):
                    raise EntryCountError(f"more than the expected {len(slots)} values", lineno)
                i, j = slots[len(vv)]
                ii.append(i)
                jj.append(j)
                vv.append(value(tok, lineno))
        if len(vv) != len(slots):
            raise EntryCountError(f"expected {len(slots)} values, found {len(vv)}", last_line)

    i = np.asarray(ii, dtype=np.int64)
    j = np.asarray(jj, dtype=np.int64)
    v = np.asarray(vv, dtype=np.float64)
    if header.symmetry != "general":
        off = i != j
        sign = -1.0 if header.symmetry == "skew-symmetric" else 1.0
        i, j, v = (
            np.concatenate([i, j[off]]),
            np.concatenate([j, i[off]]),
            np.concatenate([v, sign * v[off]]),
        )
    return CsrMatrix.from_coo(rows, cols, i, j, v)


def write_matrix_market(m: CsrMatrix, sink: BinaryIO) -> None:
    """Write ``m`` as coordinate/real/general with 17 significant digits."""
    if not np.all(np.isfinite(m.values)):
        raise ValueError("write_matrix_market: matrix has non-finite entries")
    out = io.StringIO()
    out.write("%%MatrixMarket matrix coordinate real general\n")
    out.write(f"{m.rows} {m.cols} {m.nnz}\n")
    rows = m.row_indices()
    for r, c, v in zip(rows.tolist(), m.col_idx.tolist(), m.values.tolist()):
        out.write(f"{r + 1} {c + 1} {v:.17g}\n")
    sink.write(out.getvalue().encode("ascii"))
