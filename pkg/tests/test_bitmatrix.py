import numpy as np
import pytest

from ganmia.bitmatrix import (
    BitMatrix,
    all_rows,
    concat_rows,
    hamming_cross,
    hamming_min,
    load_csv,
    save_csv,
)
from ganmia.rng import make_rng


def naive_hamming(a, b):
    return np.array([[int((ra != rb).sum()) for rb in b] for ra in a])


def test_round_trip_random_shapes():
    rng = make_rng(10)
    for _ in range(20):
        n = int(rng.integers(1, 40))
        d = int(rng.integers(1, 200))
        arr = (rng.random((n, d)) < rng.random()).astype(np.uint8)
        m = BitMatrix.from_array(arr)
        assert m.shape == (n, d)
        assert np.array_equal(m.to_array(), arr)


def test_rejects_non_binary():
    with pytest.raises(ValueError):
        BitMatrix.from_array([[0, 1, 2]])


def test_padding_bits_validated():
    words = np.array([[0b1111]], dtype=np.uint64)
    with pytest.raises(ValueError, match="padding"):
        BitMatrix(1, 3, words)


def test_packed_hamming_equals_naive_loop():
    # brute-force oracle over random cases, incl. widths straddling words
    rng = make_rng(11)
    for _ in range(50):
        d = int(rng.integers(1, 150))
        a = (rng.random((int(rng.integers(1, 12)), d)) < 0.5).astype(np.uint8)
        b = (rng.random((int(rng.integers(1, 12)), d)) < 0.5).astype(np.uint8)
        ma, mb = BitMatrix.from_array(a), BitMatrix.from_array(b)
        expected = naive_hamming(a, b)
        assert np.array_equal(hamming_cross(ma, mb), expected)
        assert np.array_equal(hamming_min(ma, mb), expected.min(axis=1))


def test_hamming_min_empty_pool_rejected():
    m = BitMatrix.from_array([[0, 1]])
    empty = BitMatrix(0, 2, np.zeros((0, 1), dtype=np.uint64))
    with pytest.raises(ValueError):
        hamming_min(m, empty)


def test_take_and_concat():
    rng = make_rng(12)
    arr = (rng.random((9, 70)) < 0.5).astype(np.uint8)
    m = BitMatrix.from_array(arr)
    sub = m.take([8, 0, 3])
    assert np.array_equal(sub.to_array(), arr[[8, 0, 3]])
    both = concat_rows([sub, m])
    assert both.n_rows == 12


def test_value_counts():
    m = BitMatrix.from_array([[0, 1], [0, 1], [1, 1]])
    counts = sorted(m.value_counts().values())
    assert counts == [1, 2]


def test_all_rows_enumeration():
    m = all_rows(3)
    assert m.shape == (8, 3)
    as_ints = sorted(int("".join(map(str, row[::-1])), 2) for row in m.to_array())
    assert as_ints == list(range(8))


def test_csv_round_trip(tmp_path):
    rng = make_rng(13)
    arr = (rng.random((7, 11)) < 0.5).astype(np.uint8)
    m = BitMatrix.from_array(arr)
    path = tmp_path / "m.csv"
    save_csv(m, str(path))
    text = path.read_text()
    assert text.endswith("\n") and "\r" not in text
    assert load_csv(str(path)) == m


def test_csv_parse_error_position(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,1,2\n")
    with pytest.raises(ValueError, match="row 1 col 3"):
        load_csv(str(path))


def test_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    m = load_csv(str(path))
    assert m.shape == (0, 0)


def test_csv_ragged_rejected(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("0,1\n0\n")
    with pytest.raises(ValueError, match="row 2"):
        load_csv(str(path))
