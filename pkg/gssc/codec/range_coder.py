"""
Carry-less 32-bit range coder over integer frequency tables.

Symbols are indices into per-symbol frequency tables (one row per coded
symbol). Every table must be strictly positive where symbols occur and sum
to at most 2^16.
"""

from typing import Callable, List, Sequence, Union

import numpy as np

from ..core.errors import CorruptStreamError, TruncatedStreamError, ValidationError

TOP = 1 << 24
BOT = 1 << 16
MASK = 0xFFFFFFFF
PROB_BITS = 16
PROB_TOTAL = 1 << PROB_BITS

PmfProvider = Union[np.ndarray, Callable[[int], np.ndarray]]


def _cumulative_rows(provider: PmfProvider) -> Callable[[int], np.ndarray]:
    if isinstance(provider, np.ndarray):
        table = cumulative(provider)
        return lambda i: table[i]
    return lambda i: cumulative(provider(i))


def cumulative(table: np.ndarray) -> np.ndarray:
    """Exclusive prefix sums with the total appended."""
    table = np.asarray(table, dtype=np.int64)
    return np.concatenate(([0], np.cumsum(table, axis=-1))) if table.ndim == 1 else \
        np.concatenate([np.zeros(table.shape[:-1] + (1,), dtype=np.int64),
                        np.cumsum(table, axis=-1)], axis=-1)


class RangeEncoder:
    """Byte-oriented encoder; ``finish`` flushes four bytes."""

    def __init__(self):
        self.low = 0
        self.range = MASK
        self.out = bytearray()

    def _normalize(self) -> None:
        while True:
            if (self.low ^ (self.low + self.range)) < TOP:
                pass
            elif self.range < BOT:
                self.range = -self.low & (BOT - 1)
            else:
                break
            self.out.append(self.low >> 24)
            self.range = (self.range << 8) & MASK
            self.low = (self.low << 8) & MASK

    def encode(self, freq: int, cum: int, total: int) -> None:
        if freq <= 0 or cum + freq > total or total > PROB_TOTAL:
            raise ValidationError("symbol has no probability mass",
                                  details={"freq": freq, "cum": cum, "total": total})
        self.range //= total
        self.low += cum * self.range
        self.range *= freq
        self._normalize()

    def finish(self) -> bytes:
        for _ in range(4):
            self.out.append(self.low >> 24)
            self.low = (self.low << 8) & MASK
        return bytes(self.out)


class RangeDecoder:
    """Mirror of ``RangeEncoder``; reading past the end is a truncation error."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.low = 0
        self.range = MASK
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._read_byte()

    def _read_byte(self) -> int:
        if self.pos >= len(self.data):
            raise TruncatedStreamError("range-coded payload ended early",
                                       details={"size": len(self.data)})
        byte = self.data[self.pos]
        self.pos += 1
        return byte

    def _normalize(self) -> None:
        while True:
            if (self.low ^ (self.low + self.range)) < TOP:
                pass
            elif self.range < BOT:
                self.range = -self.low & (BOT - 1)
            else:
                break
            self.code = ((self.code << 8) | self._read_byte()) & MASK
            self.range = (self.range << 8) & MASK
            self.low = (self.low << 8) & MASK

    def decode_target(self, total: int) -> int:
        self.range //= total
        target = (self.code - self.low) // self.range
        if target < 0 or target >= total:
            raise CorruptStreamError("range-coded payload is inconsistent",
                                     details={"position": self.pos})
        return target

    def update(self, freq: int, cum: int) -> None:
        self.low += cum * self.range
        self.range *= freq
        self._normalize()

    def exhausted(self) -> bool:
        return self.pos == len(self.data)


def range_encode(symbols: Sequence[int], pmf_provider: PmfProvider) -> bytes:
    """Encode table indices, one frequency table per symbol in coding order."""
    encoder = RangeEncoder()
    rows = _cumulative_rows(pmf_provider)
    for i, symbol in enumerate(symbols):
        cum = rows(i)
        s = int(symbol)
        if not 0 <= s < len(cum) - 1:
            raise ValidationError(f"symbol index {s} outside its table", details={"position": i})
        encoder.encode(int(cum[s + 1] - cum[s]), int(cum[s]), int(cum[-1]))
    return encoder.finish()


def range_decode(data: bytes, pmf_provider: PmfProvider, count: int,
                 require_exhausted: bool = True) -> List[int]:
    """Decode ``count`` symbols; the provider must match the encoder's exactly."""
    decoder = RangeDecoder(data)
    rows = _cumulative_rows(pmf_provider)
    symbols = []
    for i in range(count):
        cum = rows(i)
        target = decoder.decode_target(int(cum[-1]))
        s = int(np.searchsorted(cum, target, side="right")) - 1
        freq = int(cum[s + 1] - cum[s])
        if freq <= 0:
            raise CorruptStreamError("decoded a zero-probability symbol", details={"position": i})
        decoder.update(freq, int(cum[s]))
        symbols.append(s)
    if require_exhausted and not decoder.exhausted():
        raise CorruptStreamError("trailing bytes after range-coded payload",
                                 details={"consumed": decoder.pos, "size": len(data)})
    return symbols
