"""Tests for the range coder."""

import numpy as np
import pytest

from gssc.codec.range_coder import PROB_TOTAL, cumulative, range_decode, range_encode
from gssc.core.errors import CorruptStreamError, TruncatedStreamError, ValidationError

UNIFORM = np.full((1, 256), 256, dtype=np.int64)


def uniform_rows(i):
    return UNIFORM[0]


def test_cumulative_appends_total():
    """Test exclusive prefix sums end with the table total."""
    np.testing.assert_array_equal(cumulative(np.array([1, 2, 3])), [0, 1, 3, 6])
    rows = cumulative(np.array([[1, 1], [2, 5]]))
    np.testing.assert_array_equal(rows, [[0, 1, 2], [0, 2, 7]])


@pytest.mark.parametrize("symbol,expected", [
    (0, b"\x00\x00\x00\x00\x00"),
    (255, b"\xfe\xff\x01\x00"),
])
def test_golden_bytes(symbol, expected):
    """Test single symbols under a uniform table produce fixed bytes."""
    assert range_encode([symbol], uniform_rows) == expected
    assert range_decode(expected, uniform_rows, 1) == [symbol]


def test_round_trip_with_varying_tables():
    """Test decoding recovers symbols coded with per-position tables."""
    rng = np.random.default_rng(11)
    count = 400
    tables = rng.integers(1, 200, size=(count, 32))
    tables[:, 0] += PROB_TOTAL - 32 * 200
    symbols = [int(rng.integers(0, 32)) for _ in range(count)]
    data = range_encode(symbols, tables)
    assert range_decode(data, tables, count) == symbols


def test_skewed_table_compresses():
    """Test a frequent symbol costs well under a byte."""
    table = np.array([[PROB_TOTAL - 3, 1, 1, 1]])
    data = range_encode([0] * 1000, lambda i: table[0])
    assert len(data) < 64


def test_zero_frequency_symbol_rejected():
    """Test coding a symbol without mass is refused."""
    with pytest.raises(ValidationError):
        range_encode([1], lambda i: np.array([PROB_TOTAL, 0]))
    with pytest.raises(ValidationError):
        range_encode([4], lambda i: np.array([1, 1]))


def test_truncated_payload():
    """Test a payload shorter than the decoder window."""
    with pytest.raises(TruncatedStreamError):
        range_decode(b"\x00\x00", uniform_rows, 1)


def test_trailing_bytes():
    """Test unused bytes after the last symbol are corruption."""
    data = range_encode([0], uniform_rows) + b"\x00"
    with pytest.raises(CorruptStreamError):
        range_decode(data, uniform_rows, 1)
    assert range_decode(data, uniform_rows, 1, require_exhausted=False) == [0]
