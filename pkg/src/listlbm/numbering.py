"""Injective cell index functions I(x, y, z) over the full bounding box.

Two families are supported: lexicographic ordering with cubic blocking
(gapless over the box) and the Morton / Z curve interleaving 1-bit or
2-bit coordinate groups (gapped unless the box is a matching power of
two). The x coordinate always varies fastest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SchemeParseError

__all__ = [
    "LexBlocked",
    "Morton",
    "NumberingScheme",
    "cell_index",
    "index_of",
    "parse_scheme",
    "scheme_text",
]


@dataclass(frozen=True)
class LexBlocked:
    """Lexicographic ordering traversing cubic b-sided blocks innermost."""

    b: int

    def __post_init__(self):
        if self.b < 1:
            raise ValueError(f"blocking factor must be >= 1, got {self.b}")


@dataclass(frozen=True)
class Morton:
    """Z curve interleaving g-bit coordinate groups, x least significant."""

    g: int

    def __post_init__(self):
        if self.g not in (1, 2):
            raise ValueError(f"Morton bit-group width must be 1 or 2, got {self.g}")


NumberingScheme = LexBlocked | Morton


def scheme_text(scheme: NumberingScheme) -> str:
    """Canonical text form, embedded verbatim in sparse file headers."""
    if isinstance(scheme, LexBlocked):
        return f"lex:b={scheme.b}"
    if isinstance(scheme, Morton):
        return f"morton:g={scheme.g}"
    raise TypeError(f"not a numbering scheme: {scheme!r}")


def parse_scheme(text: str) -> NumberingScheme:
    """Parse the canonical grammar ``lex:b=<int>`` | ``morton:g=<1|2>``."""
    kind, sep, arg = text.partition(":")
    if not sep:
        raise SchemeParseError(f"missing ':' separator in scheme {text!r}")
    if kind == "lex":
        key, val = _split_param(arg, text)
        if key != "b":
            raise SchemeParseError(f"expected parameter 'b' in {text!r}, got {key!r}")
        try:
            return LexBlocked(_parse_int(val, text))
        except ValueError as exc:
            raise SchemeParseError(f"bad blocking factor {val!r}: {exc}") from None
    if kind == "morton":
        key, val = _split_param(arg, text)
        if key != "g":
            raise SchemeParseError(f"expected parameter 'g' in {text!r}, got {key!r}")
        try:
            return Morton(_parse_int(val, text))
        except ValueError as exc:
            raise SchemeParseError(f"bad bit-group width {val!r}: {exc}") from None
    raise SchemeParseError(f"unknown scheme kind {kind!r} in {text!r}")


def _split_param(arg, text):
    key, sep, val = arg.partition("=")
    if not sep:
        raise SchemeParseError(f"missing '=' in scheme parameter of {text!r}")
    return key, val


def _parse_int(val, text):
    # canonical form only: bare decimal digits, no sign or whitespace
    if not val.isdigit():
        raise SchemeParseError(f"non-integer parameter {val!r} in {text!r}")
    return int(val)


def cell_index(scheme: NumberingScheme, x, y, z, dims) -> np.ndarray:
    """Vectorized index function; accepts scalars or equal-shaped arrays.

    Coordinates must already lie inside ``dims``; this low-level routine
    does not bounds-check. Returns uint64 codes.
    """
    if isinstance(scheme, LexBlocked):
        return _lex_blocked_index(scheme.b, x, y, z, dims)
    if isinstance(scheme, Morton):
        return _morton_index(scheme.g, x, y, z, dims)
    raise TypeError(f"not a numbering scheme: {scheme!r}")


def index_of(scheme: NumberingScheme, coord, dims) -> int:
    """Index of a single cell, with bounds checking."""
    x, y, z = coord
    X, Y, Z = dims
    if not (0 <= x < X and 0 <= y < Y and 0 <= z < Z):
        raise DomainError(f"coordinate {coord} outside dims {tuple(dims)}")
    return int(cell_index(scheme, x, y, z, dims))


def _lex_blocked_index(b, x, y, z, dims):
    # Rank of (x, y, z) under the sort key
    # (z//b, y//b, x//b, z%b, y%b, x%b); partial blocks at the domain
    # edges keep their truncated extents so the index stays gapless.
    X, Y, Z = (int(d) for d in dims)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    bx, by, bz = x // b, y // b, z // b
    wx = np.minimum(b, X - bx * b)
    wy = np.minimum(b, Y - by * b)
    wz = np.minimum(b, Z - bz * b)
    before = bz * b * (X * Y) + wz * (by * b) * X + wz * wy * (bx * b)
    within = (z % b) * wy * wx + (y % b) * wx + (x % b)
    return (before + within).astype(np.uint64)


def _morton_index(g, x, y, z, dims):
    x = np.asarray(x, dtype=np.uint64)
    y = np.asarray(y, dtype=np.uint64)
    z = np.asarray(z, dtype=np.uint64)
    bits = max(int(d) - 1 for d in dims).bit_length()
    ngroups = -(-bits // g)
    if 3 * g * ngroups > 64:
        raise DomainError(f"dims {tuple(dims)} overflow 64-bit Morton codes")
    mask = np.uint64((1 << g) - 1)
    code = np.zeros(np.broadcast(x, y, z).shape, dtype=np.uint64)
    for k in range(ngroups):
        src = np.uint64(g * k)
        dst = np.uint64(3 * g * k)
        code |= ((x >> src) & mask) << dst
        code |= ((y >> src) & mask) << (dst + np.uint64(g))
        code |= ((z >> src) & mask) << (dst + np.uint64(2 * g))
    return code
