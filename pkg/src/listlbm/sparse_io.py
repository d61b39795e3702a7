"""Binary sparse-representation file: sorted write, whole and chunked read.

Layout (little-endian): magic "SPRS", version u32, X/Y/Z u64, N_f u64,
periodic-axis bits u32, scheme string (u16 length + ASCII), partition
start table flag u32 (0/1, then u64 count + starts), followed by N_f
fixed 156-byte records sorted ascending by I_c: x, y, z as u32 and 18
neighbor indices as u64. I_c is implicit: record i holds I_c = i + 1,
so chunk reads seek straight to their record range.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .adjacency import SparseRecords
from .errors import ConsistencyError, FormatError
from .partition import chunk_ranges

__all__ = [
    "RECORD_DTYPE",
    "SparseHeader",
    "header_nbytes",
    "read_chunk",
    "read_header",
    "read_sparse",
    "write_sparse",
]

SPARSE_MAGIC = b"SPRS"
SPARSE_VERSION = 1
_FIXED = struct.Struct("<4sI3QQIH")  # magic, version, X, Y, Z, N_f, periodic, slen

RECORD_DTYPE = np.dtype([("x", "<u4"), ("y", "<u4"), ("z", "<u4"), ("nbr", "<u8", (18,))])
assert RECORD_DTYPE.itemsize == 156


@dataclass(frozen=True)
class SparseHeader:
    dims: tuple[int, int, int]
    n_fluid: int
    scheme_text: str
    periodic: tuple[bool, bool, bool] = (False, False, False)
    part_starts: tuple[int, ...] | None = None

    def __post_init__(self):
        X, Y, Z = self.dims
        if min(X, Y, Z) < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if not 0 <= self.n_fluid <= X * Y * Z:
            raise ValueError(f"fluid count {self.n_fluid} exceeds {X * Y * Z} cells")
        try:
            encoded = self.scheme_text.encode("ascii")
        except UnicodeEncodeError:
            raise ValueError(f"scheme text {self.scheme_text!r} is not ASCII") from None
        if len(encoded) > 0xFFFF:
            raise ValueError("scheme text too long")
        if self.part_starts is not None:
            s = self.part_starts
            if not s or s[0] != 1:
                raise ValueError("partition start table must begin at 1")
            if any(b <= a for a, b in zip(s, s[1:])):
                raise ValueError("partition start table must increase strictly")
            if s[-1] > self.n_fluid:
                raise ValueError(
                    f"partition start {s[-1]} exceeds N_f={self.n_fluid}"
                )


def header_nbytes(header: SparseHeader) -> int:
    n = _FIXED.size + len(header.scheme_text.encode("ascii")) + 4
    if header.part_starts is not None:
        n += 8 + 8 * len(header.part_starts)
    return n


def _pack_header(header: SparseHeader) -> bytes:
    X, Y, Z = header.dims
    scheme = header.scheme_text.encode("ascii")
    pbits = sum(1 << i for i, p in enumerate(header.periodic) if p)
    out = [_FIXED.pack(SPARSE_MAGIC, SPARSE_VERSION, X, Y, Z, header.n_fluid, pbits, len(scheme))]
    out.append(scheme)
    if header.part_starts is None:
        out.append(struct.pack("<I", 0))
    else:
        out.append(struct.pack("<IQ", 1, len(header.part_starts)))
        out.append(np.asarray(header.part_starts, dtype="<u8").tobytes())
    return b"".join(out)


def write_sparse(path, records: SparseRecords, header: SparseHeader) -> None:
    """Write records sorted by I_c; the index set must be exactly [1, N_f].

    All consistency checks run before any bytes are written.
    """
    if len(records) != header.n_fluid:
        raise ConsistencyError(
            f"header says {header.n_fluid} records, got {len(records)}"
        )
    rec = records.sorted_by_ic()
    if not np.array_equal(rec.ic, np.arange(1, len(rec) + 1, dtype=np.uint64)):
        raise ConsistencyError("record indices must cover [1, N_f] exactly once")
    if len(rec) and int(rec.nbr.max()) > header.n_fluid:
        raise ConsistencyError(
            f"neighbor index {int(rec.nbr.max())} exceeds N_f={header.n_fluid}"
        )
    arr = np.empty(len(rec), dtype=RECORD_DTYPE)
    arr["x"] = rec.coords[:, 0]
    arr["y"] = rec.coords[:, 1]
    arr["z"] = rec.coords[:, 2]
    arr["nbr"] = rec.nbr
    with open(path, "wb") as fh:
        fh.write(_pack_header(header))
        fh.write(arr.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    pos = fh.tell()
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(
            f"truncated {what}: need {n} bytes, got {len(buf)}", offset=pos + len(buf)
        )
    return buf


def read_header(fh) -> SparseHeader:
    """Parse the header from an open binary file, leaving the position at
    the first record."""
    fixed = _read_exact(fh, _FIXED.size, "header")
    magic, version, X, Y, Z, n_fluid, pbits, slen = _FIXED.unpack(fixed)
    if magic != SPARSE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SPARSE_MAGIC!r}", offset=0)
    if version != SPARSE_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    for i, (name, d) in enumerate(zip("XYZ", (X, Y, Z))):
        if d < 1:
            raise FormatError(f"dimension {name}={d} must be >= 1", offset=8 + 8 * i)
    if n_fluid > X * Y * Z:
        raise FormatError(
            f"fluid count {n_fluid} exceeds {X * Y * Z} cells", offset=32
        )
    if pbits > 0b111:
        raise FormatError(f"invalid periodic flag bits {pbits:#x}", offset=40)
    raw_scheme = _read_exact(fh, slen, "scheme string")
    try:
        scheme_text = raw_scheme.decode("ascii")
    except UnicodeDecodeError:
        raise FormatError("scheme string is not ASCII", offset=_FIXED.size) from None
    tpos = fh.tell()
    (tflag,) = struct.unpack("<I", _read_exact(fh, 4, "table flag"))
    if tflag not in (0, 1):
        raise FormatError(f"table flag must be 0 or 1, got {tflag}", offset=tpos)
    part_starts = None
    if tflag:
        (count,) = struct.unpack("<Q", _read_exact(fh, 8, "table count"))
        if count < 1 or count > n_fluid:
            raise FormatError(
                f"table count {count} outside [1, {n_fluid}]", offset=tpos + 4
            )
        raw = _read_exact(fh, 8 * count, "start table")
        starts = np.frombuffer(raw, dtype="<u8")
        if starts[0] != 1:
            raise FormatError(
                f"first partition start must be 1, got {starts[0]}", offset=tpos + 12
            )
        bad = np.flatnonzero(starts[1:] <= starts[:-1])
        if bad.size:
            k = int(bad[0]) + 1
            raise FormatError(
                f"partition start #{k} = {starts[k]} does not increase",
                offset=tpos + 12 + 8 * k,
            )
        if starts[-1] > n_fluid:
            raise FormatError(
                f"partition start {starts[-1]} exceeds N_f={n_fluid}",
                offset=tpos + 12 + 8 * (count - 1),
            )
        part_starts = tuple(int(s) for s in starts)
    periodic = tuple(bool(pbits >> i & 1) for i in range(3))
    return SparseHeader(
        dims=(X, Y, Z),
        n_fluid=n_fluid,
        scheme_text=scheme_text,
        periodic=periodic,
        part_starts=part_starts,
    )


def _check_body_size(path, header: SparseHeader, base: int) -> None:
    size = os.stat(path).st_size
    expect = base + RECORD_DTYPE.itemsize * header.n_fluid
    if size < expect:
        missing_at = (size - base) // RECORD_DTYPE.itemsize + 1
        raise FormatError(
            f"truncated record for I_c={missing_at}: file has {size} bytes, "
            f"needs {expect}",
            offset=size,
        )
    if size > expect:
        raise FormatError(
            f"trailing data: {size - expect} bytes past the last record",
            offset=expect,
        )


def _to_records(arr: np.ndarray, first_ic: int) -> SparseRecords:
    n = arr.shape[0]
    coords = np.empty((n, 3), dtype=np.uint32)
    coords[:, 0] = arr["x"]
    coords[:, 1] = arr["y"]
    coords[:, 2] = arr["z"]
    nbr = arr["nbr"].astype(np.uint64)  # detach from the read-only file buffer
    ic = np.arange(first_ic, first_ic + n, dtype=np.uint64)
    return SparseRecords(coords=coords, ic=ic, nbr=nbr)


def read_sparse(path) -> tuple[SparseHeader, SparseRecords]:
    """Read the whole file."""
    with open(path, "rb") as fh:
        header = read_header(fh)
        base = fh.tell()
        _check_body_size(path, header, base)
        arr = np.frombuffer(fh.read(), dtype=RECORD_DTYPE)
    return header, _to_records(arr, 1)


def read_chunk(path, n: int, N: int) -> tuple[SparseHeader, SparseRecords]:
    """Read only chunk n of N (equal chunking over [1, N_f])."""
    with open(path, "rb") as fh:
        header = read_header(fh)
        base = fh.tell()
        assignment = chunk_ranges(header.n_fluid, N)  # validates N <= N_f
        if not 0 <= n < N:
            raise ValueError(f"chunk id {n} outside [0, {N})")
        _check_body_size(path, header, base)
        lo = int(assignment.boundaries[n])
        hi = int(assignment.boundaries[n + 1])
        fh.seek(base + RECORD_DTYPE.itemsize * (lo - 1))
        raw = fh.read(RECORD_DTYPE.itemsize * (hi - lo))
        arr = np.frombuffer(raw, dtype=RECORD_DTYPE)
    return header, _to_records(arr, lo)
