"""Binary cache of assembled sector operators.

Nonlocal assembly dominates runtime, so operator triples are cached keyed
by the exact mesh nodes and kernel parameters.  Files store raw little-
endian float64 payloads; a cache hit therefore reproduces the assembled
matrices bit for bit and can never change numerical results.  Corrupt or
mismatched files are discarded and rebuilt.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .assemble import SectorOperator, assemble_operator
from .mesh import RadialMesh
from .special import KernelSpec

__all__ = ["OperatorCache", "cache_key", "write_operator", "read_operator"]

log = logging.getLogger(__name__)

_MAGIC = b"MXLPOP01"


def cache_key(mesh: RadialMesh, spec: KernelSpec) -> str:
    """16-hex-digit digest of the exact mesh geometry and kernel parameters."""
    h = hashlib.sha256()
    h.update(repr((spec.dim, spec.order, spec.sector, spec.quad_order,
                   float(mesh.exterior_cutoff))).encode())
    h.update(np.ascontiguousarray(mesh.nodes).tobytes())
    h.update(np.ascontiguousarray(mesh.ext_nodes).tobytes())
    return h.hexdigest()[:16]


def write_operator(path: Path | str, op: SectorOperator) -> None:
    """Atomically write an operator triple next to its mesh geometry."""
    path = Path(path)
    mesh, spec = op.mesh, op.spec
    nodes = np.ascontiguousarray(mesh.nodes, dtype="<f8")
    ext = np.ascontiguousarray(mesh.ext_nodes, dtype="<f8")
    ints = struct.pack("<6q", spec.dim, spec.sector, spec.quad_order,
                       op.ndof, nodes.size, ext.size)
    flts = struct.pack("<3d", spec.order, mesh.grading, mesh.exterior_cutoff)
    blobs = [np.ascontiguousarray(a, dtype="<f8").tobytes()
             for a in (nodes, ext, op.k_loc, op.k_nl, op.mass)]
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(ints)
            fh.write(flts)
            for b in blobs:
                fh.write(b)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_operator(path: Path | str) -> SectorOperator:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not an operator cache file")
    off = 8
    dim, sector, quad_order, ndof, n_nodes, n_ext = struct.unpack_from("<6q", raw, off)
    off += 48
    order, grading, cutoff = struct.unpack_from("<3d", raw, off)
    off += 24

    def take(count, shape):
        nonlocal off
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        off += 8 * count
        return a.reshape(shape).copy()

    nodes = take(n_nodes, (n_nodes,))
    ext = take(n_ext, (n_ext,))
    k_loc = take(ndof * ndof, (ndof, ndof))
    k_nl = take(ndof * ndof, (ndof, ndof))
    mass = take(ndof * ndof, (ndof, ndof))
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes")
    mesh = RadialMesh(nodes, grading, cutoff, ext)
    spec = KernelSpec(int(dim), float(order), int(sector), int(quad_order))
    return SectorOperator(spec=spec, mesh=mesh, k_loc=k_loc, k_nl=k_nl, mass=mass)


class OperatorCache:
    """In-memory (and optionally on-disk) store of assembled operators."""

    def __init__(self, root: Path | str | None = None):
        self.root = Path(root) if root is not None else None
        self._mem: dict[str, SectorOperator] = {}

    def path_for(self, key: str) -> Path | None:
        return self.root / f"{key}.bin" if self.root is not None else None

    def get(self, mesh: RadialMesh, spec: KernelSpec,
            refine_check: bool = True) -> SectorOperator:
        key = cache_key(mesh, spec)
        op = self._mem.get(key)
        if op is not None:
            return op
        path = self.path_for(key)
        if path is not None and path.exists():
            try:
                op = read_operator(path)
            except (ValueError, struct.error) as exc:
                log.warning("discarding unreadable cache file %s (%s)", path, exc)
                op = None
        if op is None:
            op = assemble_operator(mesh, spec, refine_check=refine_check)
            if path is not None:
                write_operator(path, op)
        self._mem[key] = op
        return op
