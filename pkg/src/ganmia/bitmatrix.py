"""Bit-packed binary matrices, Hamming-distance kernels, and CSV I/O.

Rows are individuals, columns are binary sites. Each row is packed 64
sites per ``uint64`` word (little bit order: column ``j`` lives in bit
``j % 64`` of word ``j // 64``). Padding bits past the last column are
kept zero, so Hamming distances are exact whole-word popcounts of XOR.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

WORD_BITS = 64


def _n_words(n_cols: int) -> int:
    return (n_cols + WORD_BITS - 1) // WORD_BITS


class BitMatrix:
    """Immutable-by-convention packed {0,1} matrix."""

    __slots__ = ("n_rows", "n_cols", "words")

    def __init__(self, n_rows: int, n_cols: int, words: np.ndarray):
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.shape != (n_rows, _n_words(n_cols)):
            raise ValueError(
                f"words shape {words.shape} inconsistent with "
                f"{n_rows} rows x {n_cols} cols"
            )
        tail = n_cols % WORD_BITS
        if n_cols > 0 and tail and words.size:
            mask = np.uint64((1 << tail) - 1)
            if np.any(words[:, -1] & ~mask):
                raise ValueError("padding bits beyond n_cols must be zero")
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.words = words

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def __len__(self) -> int:
        return self.n_rows

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    def __repr__(self) -> str:
        return f"BitMatrix({self.n_rows}x{self.n_cols})"

    @classmethod
    def from_array(cls, arr) -> "BitMatrix":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError(f"expected 2-D array, got shape {arr.shape}")
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ValueError("entries must be 0 or 1")
        n, d = arr.shape
        nw = _n_words(d)
        if n == 0 or d == 0:
            return cls(n, d, np.zeros((n, nw), dtype=np.uint64))
        packed = np.packbits(arr.astype(np.uint8), axis=1, bitorder="little")
        padded = np.zeros((n, nw * 8), dtype=np.uint8)
        padded[:, : packed.shape[1]] = packed
        return cls(n, d, padded.view(np.uint64))

    def to_array(self) -> np.ndarray:
        """Dense uint8 copy."""
        if self.n_rows == 0 or self.n_cols == 0:
            return np.zeros(self.shape, dtype=np.uint8)
        as_bytes = self.words.view(np.uint8).reshape(self.n_rows, -1)
        return np.unpackbits(as_bytes, axis=1, bitorder="little", count=self.n_cols)

    def take(self, indices) -> "BitMatrix":
        indices = np.asarray(indices, dtype=np.intp)
        return BitMatrix(int(indices.size), self.n_cols, self.words[indices])

    def row(self, i: int) -> "BitMatrix":
        return self.take([i])

    def column_means(self) -> np.ndarray:
        if self.n_rows == 0:
            return np.zeros(self.n_cols)
        return self.to_array().mean(axis=0)

    def value_counts(self) -> dict[bytes, int]:
        """Multiplicity of each distinct row, keyed by its packed bytes."""
        counts: dict[bytes, int] = {}
        for i in range(self.n_rows):
            key = self.words[i].tobytes()
            counts[key] = counts.get(key, 0) + 1
        return counts

    def row_keys(self) -> list[bytes]:
        return [self.words[i].tobytes() for i in range(self.n_rows)]


def concat_rows(parts: list[BitMatrix]) -> BitMatrix:
    if not parts:
        raise ValueError("nothing to concatenate")
    d = parts[0].n_cols
    for p in parts:
        if p.n_cols != d:
            raise ValueError("column counts differ")
    words = np.vstack([p.words for p in parts])
    return BitMatrix(sum(p.n_rows for p in parts), d, words)


def all_rows(n_cols: int) -> BitMatrix:
    """All 2**n_cols binary rows, row i encoding bit j = (i >> j) & 1."""
    if n_cols > 24:
        raise ValueError("enumeration limited to 24 columns")
    ints = np.arange(1 << n_cols, dtype=np.uint64)
    nw = _n_words(n_cols)
    words = np.zeros((ints.size, nw), dtype=np.uint64)
    words[:, 0] = ints
    return BitMatrix(ints.size, n_cols, words)


def hamming_cross(a: BitMatrix, b: BitMatrix, chunk: int = 256) -> np.ndarray:
    """Pairwise Hamming distances, shape (len(a), len(b)), dtype int64."""
    if a.n_cols != b.n_cols:
        raise ValueError("column counts differ")
    out = np.empty((a.n_rows, b.n_rows), dtype=np.int64)
    bw = b.words[None, :, :]
    for start in range(0, a.n_rows, chunk):
        stop = min(start + chunk, a.n_rows)
        xor = a.words[start:stop, None, :] ^ bw
        out[start:stop] = np.bitwise_count(xor).sum(axis=2, dtype=np.int64)
    return out


def hamming_min(queries: BitMatrix, pool: BitMatrix, chunk: int = 256) -> np.ndarray:
    """Min Hamming distance from each query row to any pool row."""
    if pool.n_rows == 0:
        raise ValueError("pool is empty")
    if queries.n_cols != pool.n_cols:
        raise ValueError("column counts differ")
    out = np.empty(queries.n_rows, dtype=np.int64)
    pw = pool.words[None, :, :]
    for start in range(0, queries.n_rows, chunk):
        stop = min(start + chunk, queries.n_rows)
        xor = queries.words[start:stop, None, :] ^ pw
        out[start:stop] = np.bitwise_count(xor).sum(axis=2, dtype=np.int64).min(axis=1)
    return out


def hamming_argmin(queries: BitMatrix, pool: BitMatrix, chunk: int = 256) -> np.ndarray:
    """Index into pool of the nearest row for each query (first on ties)."""
    if pool.n_rows == 0:
        raise ValueError("pool is empty")
    out = np.empty(queries.n_rows, dtype=np.int64)
    pw = pool.words[None, :, :]
    for start in range(0, queries.n_rows, chunk):
        stop = min(start + chunk, queries.n_rows)
        xor = queries.words[start:stop, None, :] ^ pw
        out[start:stop] = np.bitwise_count(xor).sum(axis=2, dtype=np.int64).argmin(axis=1)
    return out


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str, blob: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_csv(matrix: BitMatrix, path: str) -> None:
    """Comma-separated 0/1 tokens, one row per line, LF endings, no header."""
    dense = matrix.to_array()
    lines = [",".join("1" if v else "0" for v in row) for row in dense]
    text = "\n".join(lines)
    if lines:
        text += "\n"
    atomic_write_text(path, text)


def load_csv(path: str) -> BitMatrix:
    """Inverse of save_csv. An empty file loads as a 0x0 matrix."""
    rows: list[list[int]] = []
    width = None
    with open(path, "r", newline="") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\r\n")
            if line == "" and width is None and line_no == 1:
                continue
            tokens = line.split(",")
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise ValueError(
                    f"row {line_no}: expected {width} columns, got {len(tokens)}"
                )
            parsed = []
            for col_no, tok in enumerate(tokens, start=1):
                if tok == "0":
                    parsed.append(0)
                elif tok == "1":
                    parsed.append(1)
                else:
                    raise ValueError(
                        f"row {line_no} col {col_no}: non-binary token {tok!r}"
                    )
            rows.append(parsed)
    if not rows:
        return BitMatrix(0, 0, np.zeros((0, 0), dtype=np.uint64))
    return BitMatrix.from_array(np.array(rows, dtype=np.uint8))
