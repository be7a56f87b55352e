"""In-memory dataset and its binary container (``.ptyx``).

Layout, all little-endian::

    magic   4s   b"PTYX"
    version u16  1
    u32 x5       probe_rows, probe_cols, object_rows, object_cols, K
    flags   u32  bit0 truth object, bit1 truth probe, bit2 truth amplitudes
    f64          scale_factor
    f64          snr_db (NaN if unknown)
    u64          seed
    K x (i32 row, i32 col)
    K x probe grid of f32 amplitudes
    [truth object: complex as interleaved f32 (re, im)]
    [truth probe: same]
    [truth amplitudes: K x probe grid of f32]

Amplitude and truth arrays are held as float32 / complex64 in memory so a
read of a written dataset reproduces it exactly.
"""

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import GeometryError, ScanPositions

MAGIC = b"PTYX"
VERSION = 1
_HEADER = struct.Struct("<4sH5IIddQ")

HAS_TRUTH_OBJECT = 1
HAS_TRUTH_PROBE = 2
HAS_TRUTH_AMPLITUDES = 4


class DatasetFormatError(ValueError):
    """Malformed or inconsistent dataset file."""


class BadMagicError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class InvalidGeometryError(DatasetFormatError):
    pass


class InvalidDataError(DatasetFormatError):
    pass


@dataclass(eq=False)
class Dataset:
    positions: ScanPositions
    amplitudes: np.ndarray
    truth_object: Optional[np.ndarray] = None
    truth_probe: Optional[np.ndarray] = None
    truth_amplitudes: Optional[np.ndarray] = None
    scale_factor: float = 1.0
    snr_db: float = float("nan")
    seed: int = 0

    def __post_init__(self):
        K = len(self.positions)
        stack = (K,) + self.positions.probe_shape
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.float32)
        if self.amplitudes.shape != stack:
            raise InvalidDataError(f"amplitude stack {self.amplitudes.shape}, expected {stack}")
        if not np.all(np.isfinite(self.amplitudes)) or np.any(self.amplitudes < 0):
            raise InvalidDataError("amplitudes must be finite and nonnegative")
        checks = (
            ("truth_object", np.complex64, self.positions.object_shape),
            ("truth_probe", np.complex64, self.positions.probe_shape),
            ("truth_amplitudes", np.float32, stack),
        )
        for name, dtype, shape in checks:
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.ascontiguousarray(arr, dtype=dtype)
            if arr.shape != shape:
                raise InvalidDataError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidDataError(f"{name} contains non-finite values")
            setattr(self, name, arr)
        if self.truth_amplitudes is not None and np.any(self.truth_amplitudes < 0):
            raise InvalidDataError("truth amplitudes must be nonnegative")
        self.scale_factor = float(self.scale_factor)
        self.snr_db = float(self.snr_db)
        self.seed = int(self.seed)

    @property
    def K(self):
        return len(self.positions)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.dtype == b.dtype and a.tobytes() == b.tobytes()

        return (
            self.positions == other.positions
            and same(self.amplitudes, other.amplitudes)
            and same(self.truth_object, other.truth_object)
            and same(self.truth_probe, other.truth_probe)
            and same(self.truth_amplitudes, other.truth_amplitudes)
            and struct.pack("<ddQ", self.scale_factor, self.snr_db, self.seed)
            == struct.pack("<ddQ", other.scale_factor, other.snr_db, other.seed)
        )


def _complex_bytes(arr):
    inter = np.empty(arr.shape + (2,), dtype="<f4")
    inter[..., 0] = arr.real
    inter[..., 1] = arr.imag
    return inter.tobytes()


def to_bytes(ds):
    pr, pc = ds.positions.probe_shape
    orows, ocols = ds.positions.object_shape
    flags = 0
    if ds.truth_object is not None:
        flags |= HAS_TRUTH_OBJECT
    if ds.truth_probe is not None:
        flags |= HAS_TRUTH_PROBE
    if ds.truth_amplitudes is not None:
        flags |= HAS_TRUTH_AMPLITUDES
    parts = [
        _HEADER.pack(MAGIC, VERSION, pr, pc, orows, ocols, ds.K, flags,
                     ds.scale_factor, ds.snr_db, ds.seed),
        ds.positions.offsets.astype("<i4").tobytes(),
        ds.amplitudes.astype("<f4").tobytes(),
    ]
    if ds.truth_object is not None:
        parts.append(_complex_bytes(ds.truth_object))
    if ds.truth_probe is not None:
        parts.append(_complex_bytes(ds.truth_probe))
    if ds.truth_amplitudes is not None:
        parts.append(ds.truth_amplitudes.astype("<f4").tobytes())
    return b"".join(parts)


def write_dataset(path, ds):
    with open(path, "wb") as fh:
        fh.write(to_bytes(ds))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"file ends inside {what}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def array(self, dtype, shape, what):
        count = int(np.prod(shape))
        raw = self.take(count * np.dtype(dtype).itemsize, what)
        return np.frombuffer(raw, dtype=dtype).reshape(shape)

    def complex_array(self, shape, what):
        inter = self.array("<f4", tuple(shape) + (2,), what)
        out = np.empty(shape, dtype=np.complex64)
        out.real = inter[..., 0]
        out.imag = inter[..., 1]
        return out


def from_bytes(buf):
    if len(buf) < 4:
        raise TruncatedFileError("file shorter than the magic number")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    if len(buf) < 6:
        raise TruncatedFileError("file ends inside the header")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {VERSION}")
    rd = _Reader(buf)
    header = _HEADER.unpack(rd.take(_HEADER.size, "the header"))
    _, _, pr, pc, orows, ocols, K, flags, scale, snr_db, seed = header
    if flags & ~(HAS_TRUTH_OBJECT | HAS_TRUTH_PROBE | HAS_TRUTH_AMPLITUDES):
        raise InvalidDataError(f"unknown flag bits {flags:#x}")
    if K < 1:
        raise InvalidGeometryError("dataset has no scan positions")
    offsets = rd.array("<i4", (K, 2), "the offsets").astype(np.int64)
    try:
        positions = ScanPositions((pr, pc), (orows, ocols), offsets)
    except GeometryError as exc:
        raise InvalidGeometryError(str(exc)) from None
    amplitudes = rd.array("<f4", (K, pr, pc), "the amplitude stack")
    truth_object = truth_probe = truth_amplitudes = None
    if flags & HAS_TRUTH_OBJECT:
        truth_object = rd.complex_array((orows, ocols), "the truth object")
    if flags & HAS_TRUTH_PROBE:
        truth_probe = rd.complex_array((pr, pc), "the truth probe")
    if flags & HAS_TRUTH_AMPLITUDES:
        truth_amplitudes = rd.array("<f4", (K, pr, pc), "the truth amplitudes")
    if rd.pos != len(buf):
        raise InvalidDataError(f"{len(buf) - rd.pos} trailing bytes after the payload")
    return Dataset(
        positions=positions,
        amplitudes=amplitudes.astype(np.float32),
        truth_object=truth_object,
        truth_probe=truth_probe,
        truth_amplitudes=None if truth_amplitudes is None else truth_amplitudes.astype(np.float32),
        scale_factor=scale,
        snr_db=snr_db,
        seed=seed,
    )


def read_dataset(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
