"""Binary (LHF1) and CSV serialization of lattice functions.

LHF1 layout, little-endian:

    magic      4 bytes  b"LHF1"
    d          u32
    m          u32
    eps        f64
    ranges     d pairs of i64 (first index, last index), inclusive
    has_mask   u8       1 if the site set is a strict subset of the box grid
    mask       packed bits (numpy.packbits of the C-order grid mask), only when has_mask
    values     f64 array of shape (n_sites, m), enumeration order
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .lattice import LatticeDomain, LatticeFunction

MAGIC = b"LHF1"


def write_lhf1(path, u: LatticeFunction) -> None:
    dom = u.domain
    parts = [MAGIC, struct.pack("<IId", dom.d, u.m, dom.eps)]
    for lo, n in zip(dom.lo, dom.shape):
        parts.append(struct.pack("<qq", lo, lo + n - 1))
    if dom.mask is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01")
        parts.append(np.packbits(dom.mask.ravel()).tobytes())
    parts.append(np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_lhf1(path) -> LatticeFunction:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError("not an LHF1 file")
    d, m, eps = struct.unpack_from("<IId", buf, 4)
    off = 4 + 16
    lo, shape = [], []
    for _ in range(d):
        a, b = struct.unpack_from("<qq", buf, off)
        off += 16
        lo.append(a)
        shape.append(b - a + 1)
    has_mask = buf[off]
    off += 1
    mask = None
    if has_mask:
        nbits = int(np.prod(shape))
        nbytes = (nbits + 7) // 8
        bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=off))[:nbits]
        mask = bits.astype(bool).reshape(shape)
        off += nbytes
    dom = LatticeDomain(eps=eps, lo=tuple(lo), shape=tuple(shape), mask=mask)
    vals = np.frombuffer(buf, dtype="<f8", offset=off).reshape(dom.n_sites, m).astype(float)
    return LatticeFunction(dom, vals)


def write_lattice_csv(path, u: LatticeFunction) -> None:
    """Debug dump: integer index columns, coordinate columns, value columns."""
    dom = u.domain
    idx = dom.indices
    header = [f"k{i}" for i in range(dom.d)] + [f"x{i}" for i in range(dom.d)] + [f"u{j}" for j in range(u.m)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, v in zip(idx, u.values):
            w.writerow([int(a) for a in k] + [repr(float(dom.eps * a)) for a in k] + [repr(float(x)) for x in v])


def write_rows(path, header, rows) -> None:
    """Plain CSV writer used by every report; floats are written with ``repr`` for bit-exact round trips."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)
