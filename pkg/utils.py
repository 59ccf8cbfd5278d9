import hashlib
import random
import re

from services.errors import DecodingError

U32 = 4


def u32(value):
    """Encode a non-negative integer as 4 bytes big-endian"""
    if value < 0 or value >= 1 << 32:
        raise ValueError(f'value {value} does not fit in 4 bytes')
    return value.to_bytes(U32, 'big')


def length_prefixed(data):
    return u32(len(data)) + data


def xor_bytes(a, b):
    """XOR two equal-length byte strings"""
    if len(a) != len(b):
        raise ValueError('xor operands differ in length')
    return (int.from_bytes(a, 'big') ^ int.from_bytes(b, 'big')).to_bytes(len(a), 'big')


def pack_bits(flags):
    """Pack booleans MSB-first into bytes, padding the last byte with zeros"""
    out = bytearray((len(flags) + 7) // 8)
    for i, flag in enumerate(flags):
        if flag:
            out[i // 8] |= 0x80 >> (i % 8)
    return bytes(out)


def unpack_bits(data, count):
    if len(data) != (count + 7) // 8:
        raise DecodingError(f'bitvector of {len(data)} bytes cannot hold {count} flags')
    return [bool(data[i // 8] & (0x80 >> (i % 8))) for i in range(count)]


def derive_rng(seed, *labels):
    """Independent deterministic random stream for a (seed, label...) pair"""
    material = ':'.join(str(part) for part in (seed,) + labels)
    return random.Random(hashlib.sha256(material.encode('utf-8')).digest())


class ByteReader:
    """Cursor over a wire message; every short read is a DecodingError"""

    def __init__(self, data):
        self._data = bytes(data)
        self._pos = 0

    def read(self, size):
        if size < 0 or self._pos + size > len(self._data):
            raise DecodingError(f'truncated message: wanted {size} bytes at offset {self._pos}')
        chunk = self._data[self._pos:self._pos + size]
        self._pos += size
        return chunk

    def read_u32(self):
        return int.from_bytes(self.read(U32), 'big')

    def read_u8(self):
        return self.read(1)[0]

    def read_prefixed(self):
        return self.read(self.read_u32())

    @property
    def remaining(self):
        return len(self._data) - self._pos

    def expect_end(self):
        if self.remaining:
            raise DecodingError(f'{self.remaining} trailing bytes')


def validate_index(index, n, name='index'):
    """Participant indices are 1-based"""
    if not 1 <= index <= n:
        raise ValueError(f'{name} {index} outside [1, {n}]')
    return index


def parse_int_list(text):
    """Parse '64,128 256' style lists used by command-line flags"""
    if not text:
        return []
    return [int(part) for part in re.split(r'[,\s]+', text.strip()) if part]
