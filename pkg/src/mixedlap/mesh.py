"""Graded radial meshes on [0, 1] and piecewise-linear radial profiles.

The mesh nodes follow r_i = 1 - (1 - i/M)^gamma, which clusters toward the
boundary r = 1 where ground states and eigenfunctions develop their
s-dependent edge behaviour.  For nonlocal assembly the mesh also carries
integration-only exterior nodes on (1, R_max]; no degree of freedom lives
there (profiles vanish identically outside the closed unit ball).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MeshError", "RadialMesh", "RadialFunction", "build_mesh"]


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class RadialMesh:
    nodes: np.ndarray            # r_0 = 0 < ... < r_M = 1
    grading: float
    exterior_cutoff: float
    ext_nodes: np.ndarray = field(repr=False)  # integration nodes in (1, R_max]

    def __post_init__(self):
        n = np.asarray(self.nodes, dtype=float)
        if n.ndim != 1 or n.size < 3:
            raise MeshError("mesh needs at least three nodes")
        if n[0] != 0.0 or n[-1] != 1.0 or np.any(np.diff(n) <= 0.0):
            raise MeshError("nodes must increase strictly from 0 to 1")
        if self.grading < 1.0:
            raise MeshError(f"grading must be >= 1, got {self.grading}")
        if self.exterior_cutoff < 2.0:
            raise MeshError(f"exterior cutoff must be >= 2, got {self.exterior_cutoff}")

    @property
    def m(self) -> int:
        """Number of elements inside [0, 1]."""
        return self.nodes.size - 1

    @property
    def all_nodes(self) -> np.ndarray:
        return np.concatenate([self.nodes, self.ext_nodes])

    def spacings(self) -> np.ndarray:
        return np.diff(self.nodes)

    def interpolate(self, fn) -> "RadialFunction":
        vals = np.asarray([float(fn(r)) for r in self.nodes])
        vals[-1] = 0.0
        return RadialFunction(self, vals)

    def key(self) -> tuple:
        return (self.m, float(self.grading), float(self.exterior_cutoff))


def build_mesh(m: int, grading: float = 2.0, exterior_cutoff: float = 4.0,
               ext_ratio: float = 1.6) -> RadialMesh:
    """Graded mesh r_i = 1 - (1 - i/M)^gamma plus geometric exterior nodes."""
    if int(m) != m or m < 16:
        raise MeshError(f"element count must be an integer >= 16, got {m}")
    if grading < 1.0:
        raise MeshError(f"grading must be >= 1, got {grading}")
    if exterior_cutoff < 2.0:
        raise MeshError(f"exterior cutoff must be >= 2, got {exterior_cutoff}")
    i = np.arange(m + 1, dtype=float)
    nodes = 1.0 - (1.0 - i / m) ** grading
    nodes[0], nodes[-1] = 0.0, 1.0
    # exterior: start from the boundary spacing and grow geometrically
    h = max(nodes[-1] - nodes[-2], 1e-6)
    ext = []
    r = 1.0
    while r < exterior_cutoff:
        h *= ext_ratio
        r = min(r + h, exterior_cutoff)
        ext.append(r)
    if len(ext) >= 2 and ext[-1] - ext[-2] < 0.25 * (ext[-2] - ext[-3] if len(ext) >= 3 else h):
        ext.pop(-2)
    return RadialMesh(nodes, float(grading), float(exterior_cutoff), np.asarray(ext))


@dataclass
class RadialFunction:
    """P1 profile on a radial mesh; vanishes at r = 1 and beyond."""

    mesh: RadialMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.mesh.nodes.shape:
            raise MeshError("values must match mesh nodes")
        if v[-1] != 0.0:
            raise MeshError("radial profile must vanish at r = 1")
        self.values = v

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.mesh.nodes, self.values, left=self.values[0], right=0.0)
        return out if out.ndim else float(out)

    @classmethod
    def from_callable(cls, mesh: RadialMesh, fn) -> "RadialFunction":
        return mesh.interpolate(fn)

    def copy(self) -> "RadialFunction":
        return RadialFunction(self.mesh, self.values.copy())
