"""Tensor-native wire framing for named pipes."""

import asyncio
import math
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np
from loguru import logger

from ditforge.errors import DitforgeError

MAGIC = b"SPRC"
VERSION = 1
MAX_NAME_BYTES = 255
DEFAULT_MAX_PAYLOAD = 1 << 30

_PREFIX = struct.Struct("<4sBBH")  # magic, version, flags, name_len
_META = struct.Struct("<QBB")  # seq_no, dtype, ndim
_U64 = struct.Struct("<Q")
_U64_MAX = (1 << 64) - 1


class FrameCorruptError(DitforgeError):
    """Raised when bytes do not form a valid frame."""


class FrameEncodeError(DitforgeError):
    """Raised when a frame cannot be encoded."""


class DType(IntEnum):
    uint8 = 0
    int32 = 1
    int64 = 2
    float16 = 3
    bfloat16 = 4
    float32 = 5

    @property
    def itemsize(self) -> int:
        return _ITEMSIZE[self]


_ITEMSIZE = {
    DType.uint8: 1,
    DType.int32: 4,
    DType.int64: 8,
    DType.float16: 2,
    DType.bfloat16: 2,
    DType.float32: 4,
}

# bfloat16 has no numpy dtype; its raw bits travel as uint16
_NUMPY = {
    DType.uint8: np.dtype("<u1"),
    DType.int32: np.dtype("<i4"),
    DType.int64: np.dtype("<i8"),
    DType.float16: np.dtype("<f2"),
    DType.bfloat16: np.dtype("<u2"),
    DType.float32: np.dtype("<f4"),
}


@dataclass(frozen=True)
class Frame:
    """One tensor on a pipe. sent_at is local bookkeeping and never on the wire."""

    seq_no: int
    name: str
    dtype: DType
    shape: tuple[int, ...]
    payload: bytes
    sent_at: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        object.__setattr__(self, "dtype", DType(self.dtype))

    @property
    def expected_len(self) -> int:
        return self.dtype.itemsize * math.prod(self.shape)

    def stamped(self, now_ns: int) -> "Frame":
        return replace(self, sent_at=now_ns)


def frame_from_array(name: str, seq_no: int, array: np.ndarray, dtype: DType | None = None) -> Frame:
    """Wrap a numpy array; dtype is inferred unless given (bfloat16 needs uint16 bits)."""
    if dtype is None:
        lookup = {v: k for k, v in _NUMPY.items() if k is not DType.bfloat16}
        dtype = lookup.get(array.dtype.newbyteorder("<"))
        if dtype is None:
            raise FrameEncodeError(f"no wire dtype for numpy {array.dtype}")
    data = np.ascontiguousarray(array, dtype=_NUMPY[dtype])
    return Frame(seq_no=seq_no, name=name, dtype=dtype, shape=data.shape, payload=data.tobytes())


def frame_to_array(frame: Frame) -> np.ndarray:
    return np.frombuffer(frame.payload, dtype=_NUMPY[frame.dtype]).reshape(frame.shape)


def encode_frame(frame: Frame) -> bytes:
    name = frame.name.encode("utf-8")
    if not name or len(name) > MAX_NAME_BYTES:
        raise FrameEncodeError(f"pipe name must be 1..{MAX_NAME_BYTES} UTF-8 bytes, got {len(name)}")
    if not 0 <= frame.seq_no <= _U64_MAX:
        raise FrameEncodeError(f"seq_no {frame.seq_no} does not fit in u64")
    if len(frame.shape) > 255 or any(d < 0 for d in frame.shape):
        raise FrameEncodeError(f"invalid shape {frame.shape}")
    if len(frame.payload) != frame.expected_len:
        raise FrameEncodeError(
            f"payload is {len(frame.payload)} bytes, {frame.dtype.name}{list(frame.shape)} "
            f"needs {frame.expected_len}"
        )
    parts = [
        _PREFIX.pack(MAGIC, VERSION, 0, len(name)),
        name,
        _META.pack(frame.seq_no, int(frame.dtype), len(frame.shape)),
        *(_U64.pack(d) for d in frame.shape),
        _U64.pack(len(frame.payload)),
        bytes(frame.payload),
    ]
    return b"".join(parts)


def _check_prefix(magic: bytes, version: int, flags: int, name_len: int) -> None:
    if magic != MAGIC:
        raise FrameCorruptError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameCorruptError(f"unsupported version {version}")
    if flags != 0:
        raise FrameCorruptError(f"unknown flags {flags:#04x}")
    if not 0 < name_len <= MAX_NAME_BYTES:
        raise FrameCorruptError(f"name length {name_len} out of range")


def _check_meta(dtype: int) -> DType:
    try:
        return DType(dtype)
    except ValueError as e:
        raise FrameCorruptError(f"unknown dtype {dtype}") from e


def _check_payload(dtype: DType, shape: tuple[int, ...], payload_len: int, max_payload: int) -> None:
    if payload_len > max_payload:
        raise FrameCorruptError(f"payload length {payload_len} exceeds limit {max_payload}")
    expected = dtype.itemsize * math.prod(shape)
    if payload_len != expected:
        raise FrameCorruptError(
            f"payload length {payload_len} does not match {dtype.name}{list(shape)} ({expected})"
        )


def _decode_name(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FrameCorruptError("pipe name is not UTF-8") from e


def _parse(buf: bytes | bytearray | memoryview, max_payload: int) -> tuple[Frame, int] | None:
    """Frame at the start of buf and its length; None when more bytes are needed."""
    view = memoryview(buf)
    if len(view) < _PREFIX.size:
        if bytes(view[: len(MAGIC)]) != MAGIC[: min(len(view), len(MAGIC))]:
            raise FrameCorruptError("bad magic")
        return None
    magic, version, flags, name_len = _PREFIX.unpack_from(view)
    _check_prefix(magic, version, flags, name_len)
    pos = _PREFIX.size
    if len(view) < pos + name_len + _META.size:
        return None
    name = _decode_name(bytes(view[pos : pos + name_len]))
    pos += name_len
    seq_no, dtype_raw, ndim = _META.unpack_from(view, pos)
    dtype = _check_meta(dtype_raw)
    pos += _META.size
    if len(view) < pos + _U64.size * (ndim + 1):
        return None
    shape = tuple(_U64.unpack_from(view, pos + i * _U64.size)[0] for i in range(ndim))
    pos += _U64.size * ndim
    (payload_len,) = _U64.unpack_from(view, pos)
    pos += _U64.size
    _check_payload(dtype, shape, payload_len, max_payload)
    if len(view) < pos + payload_len:
        return None
    payload = bytes(view[pos : pos + payload_len])
    return Frame(seq_no=seq_no, name=name, dtype=dtype, shape=shape, payload=payload), pos + payload_len


def decode_frame(data: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> Frame:
    """Decode exactly one frame; truncation or trailing bytes are corruption."""
    parsed = _parse(data, max_payload)
    if parsed is None:
        raise FrameCorruptError(f"truncated frame ({len(data)} bytes)")
    frame, end = parsed
    if end != len(data):
        raise FrameCorruptError(f"{len(data) - end} trailing bytes after frame")
    return frame


class FrameDecoder:
    """
    Incremental decoder for a byte stream.

    Corrupt input is skipped one byte at a time until the next magic, so a torn
    frame costs only itself.
    """

    def __init__(self, max_payload: int = DEFAULT_MAX_PAYLOAD):
        self.max_payload = max_payload
        self.skipped_bytes = 0
        self.resyncs = 0
        self._buf = bytearray()

    def _skip(self, count: int) -> None:
        del self._buf[:count]
        self.skipped_bytes += count

    def feed(self, data: bytes) -> list[Frame]:
        self._buf.extend(data)
        frames: list[Frame] = []
        while self._buf:
            start = self._buf.find(MAGIC)
            if start < 0:
                # Keep a tail that may be the start of the next magic
                keep = next(
                    (n for n in range(len(MAGIC) - 1, 0, -1) if self._buf.endswith(MAGIC[:n])), 0
                )
                if len(self._buf) > keep:
                    self._skip(len(self._buf) - keep)
                break
            if start:
                self._skip(start)
            try:
                parsed = _parse(self._buf, self.max_payload)
            except FrameCorruptError as e:
                self.resyncs += 1
                logger.warning(f"Resynchronising frame stream: {e}")
                self._skip(1)
                continue
            if parsed is None:
                break
            frame, end = parsed
            frames.append(frame)
            del self._buf[:end]
        return frames

    @property
    def buffered(self) -> int:
        return len(self._buf)


async def read_frame(
    reader: asyncio.StreamReader, max_payload: int = DEFAULT_MAX_PAYLOAD
) -> Frame | None:
    """Read one frame; None on a clean end of stream before any header byte."""
    try:
        head = await reader.readexactly(_PREFIX.size)
    except asyncio.IncompleteReadError as e:
        if not e.partial:
            return None
        raise FrameCorruptError(f"stream ended inside a frame header ({len(e.partial)} bytes)") from e
    try:
        magic, version, flags, name_len = _PREFIX.unpack(head)
        _check_prefix(magic, version, flags, name_len)
        name = _decode_name(await reader.readexactly(name_len))
        seq_no, dtype_raw, ndim = _META.unpack(await reader.readexactly(_META.size))
        dtype = _check_meta(dtype_raw)
        dims = await reader.readexactly(_U64.size * (ndim + 1))
        values = struct.unpack(f"<{ndim + 1}Q", dims)
        shape, payload_len = tuple(values[:-1]), values[-1]
        _check_payload(dtype, shape, payload_len, max_payload)
        payload = await reader.readexactly(payload_len)
    except asyncio.IncompleteReadError as e:
        raise FrameCorruptError("stream ended inside a frame") from e
    return Frame(seq_no=seq_no, name=name, dtype=dtype, shape=shape, payload=payload)
