"""
On-disk spectrum cache.

Entries are keyed by the SHA-256 of a canonical JSON record of
(kind, omega, delta, g, lambda_perturb, cutoffs, sector, vectors).  Each file
is little-endian:

====== ========= =============================================
offset type      content
====== ========= =============================================
0      4 bytes   magic ``RBCS``
4      uint32    format version (1)
8      uint32    flags: bit 0 eigenvectors present, bit 1 support present
12     uint32    reserved (0)
16     uint64    number of eigenvalues m
24     uint64    number of vector rows r
32     uint64    full-space dimension
40     float64   m eigenvalues
...    int64     r support indices (flag bit 1)
...    float64   r x m eigenvectors, row-major (flag bit 0)
====== ========= =============================================

Writes go to a temporary file that is renamed into place, so readers never
see partial entries.  The cache is an optimization only.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .models import ModelParams
from .spectral import Spectrum

MAGIC = b"RBCS"
VERSION = 1
_HEADER = struct.Struct("<4sIII QQQ")


def cache_key(params: ModelParams, cutoffs, sector, vectors: bool = True) -> str:
    record = {
        "kind": params.kind, "omega": params.omega, "delta": params.delta, "g": params.g,
        "lambda_perturb": params.lambda_perturb, "cutoffs": [int(c) for c in cutoffs],
        "sector": sector if isinstance(sector, str) else float(sector), "vectors": bool(vectors),
    }
    return hashlib.sha256(json.dumps(record, sort_keys=True).encode()).hexdigest()


def write_spectrum(path: Path, spec: Spectrum) -> None:
    vectors = spec.eigenvectors
    if vectors is not None and np.iscomplexobj(vectors):
        raise ValueError("only real eigenvectors are stored")
    flags = (1 if vectors is not None else 0) | (2 if spec.support is not None else 0)
    rows = 0 if vectors is None else vectors.shape[0]
    parts = [_HEADER.pack(MAGIC, VERSION, flags, 0, len(spec), rows, spec.dim),
             spec.eigenvalues.astype("<f8").tobytes()]
    if spec.support is not None:
        parts.append(spec.support.astype("<i8").tobytes())
    if vectors is not None:
        parts.append(np.ascontiguousarray(vectors, dtype="<f8").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(parts))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_spectrum(path: Path, label=None) -> Spectrum:
    raw = Path(path).read_bytes()
    magic, version, flags, _, m, rows, dim = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path} is not a version-{VERSION} spectrum cache file")
    off = _HEADER.size
    w = np.frombuffer(raw, "<f8", m, off).astype(float)
    off += 8 * m
    support = None
    if flags & 2:
        support = np.frombuffer(raw, "<i8", rows, off).astype(np.int64)
        off += 8 * rows
    vectors = None
    if flags & 1:
        vectors = np.frombuffer(raw, "<f8", rows * m, off).reshape(rows, m).copy()
    return Spectrum(w, vectors, support=support, dim=int(dim), source="cache", label=label)


class SpectrumCache:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.hits = 0
        self.misses = 0

    def path(self, params, cutoffs, sector, vectors=True) -> Path:
        return self.directory / f"{cache_key(params, cutoffs, sector, vectors)}.bin"

    def load(self, params, cutoffs, sector, vectors: bool = True) -> Spectrum | None:
        p = self.path(params, cutoffs, sector, vectors)
        if not p.exists():
            self.misses += 1
            return None
        try:
            spec = read_spectrum(p, label=sector)
        except (ValueError, struct.error):
            self.misses += 1
            return None
        self.hits += 1
        return spec

    def store(self, params, cutoffs, sector, spec: Spectrum) -> None:
        if spec.eigenvectors is not None and np.iscomplexobj(spec.eigenvectors):
            return
        write_spectrum(self.path(params, cutoffs, sector, spec.has_vectors), spec)
