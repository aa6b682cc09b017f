"""s-harmonic extension to the upper half space by Poisson quadrature.

For radial boundary data w supported in the unit ball, the extension

    W(r, t) = P(N, s) t^{2s} int_0^1 w(rho) kappa_0(r, rho; t^2) rho^{N-1} drho

follows by collapsing the angular integral into the zonal kernel with the
squared height folded into the distance.  Two trace identities are exposed:
the weighted Neumann derivative recovering the fractional Laplacian, and
the far-field moment limit t^N W(0, t) -> P(N, s) * integral of w.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import special
from .assemble import QuadratureError, radial_integral
from .mesh import RadialFunction
from .special import KernelSpec, zonal_kernel

__all__ = [
    "ExtensionSample",
    "ExtrapolationError",
    "cs_extend",
    "neumann_trace",
    "moment_limit",
]


class ExtrapolationError(RuntimeError):
    """Raised when Richardson estimates of the Neumann trace disagree."""


@dataclass
class ExtensionSample:
    """Extension values W(r, t) on a (radii x heights) grid."""

    base: RadialFunction
    radii: np.ndarray
    heights: np.ndarray
    values: np.ndarray  # shape (len(radii), len(heights))

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("r,t,W\n")
            for i, r in enumerate(self.radii):
                for j, t in enumerate(self.heights):
                    fh.write(f"{r:.17g},{t:.17g},{self.values[i, j]:.17g}\n")


def _rho_rule(kinks: np.ndarray, t: float, npts: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on [0, 1] resolving the kernel scale t.

    Splits every inter-kink segment into pieces no longer than t/2 (the
    Poisson kernel varies on scale t), with a floor so the rule stays small
    for very thin heights.
    """
    x, w = special.gauss01(npts)
    target = max(0.5 * t, 2e-3)
    rho, wts = [], []
    left = np.asarray(kinks, dtype=float)
    for a, b in zip(left[:-1], left[1:]):
        if b - a <= 1e-15:
            continue
        nsub = max(1, int(np.ceil((b - a) / target)))
        edges = np.linspace(a, b, nsub + 1)
        for ea, eb in zip(edges[:-1], edges[1:]):
            rho.append(ea + (eb - ea) * x)
            wts.append((eb - ea) * w)
    return np.concatenate(rho), np.concatenate(wts)


def _extension_values(w: RadialFunction, radii: np.ndarray, t: float,
                      spec: KernelSpec) -> np.ndarray:
    """W(r, t) for one height over a vector of radii."""
    spec0 = KernelSpec(dim=spec.dim, order=spec.order, sector=0,
                       quad_order=spec.quad_order)
    rho, wts = _rho_rule(w.mesh.nodes, t)
    dens = wts * w(rho) * rho ** (spec.dim - 1)
    rr = np.repeat(np.asarray(radii, dtype=float), rho.size)
    pp = np.tile(rho, len(radii))
    ker = zonal_kernel(rr, pp, spec0, offset2=t * t).reshape(len(radii), rho.size)
    pns = special.poisson_pns(spec.dim, spec.order)
    return pns * t ** (2.0 * spec.order) * (ker @ dens)


def cs_extend(w: RadialFunction, radii, heights, spec: KernelSpec) -> ExtensionSample:
    """Extend w s-harmonically; evaluate on the (radii x heights) grid."""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    heights = np.atleast_1d(np.asarray(heights, dtype=float))
    if np.any(heights <= 0.0):
        raise ValueError("heights must be positive")
    if np.any(heights < 1e-4):
        raise QuadratureError(
            "heights below 1e-4 are not resolved; use neumann_trace extrapolation"
        )
    vals = np.empty((len(radii), len(heights)))
    for j, t in enumerate(heights):
        vals[:, j] = _extension_values(w, radii, float(t), spec)
    return ExtensionSample(base=w, radii=radii, heights=heights, values=vals)


def neumann_trace(w: RadialFunction, spec: KernelSpec,
                  t_sequence=(0.08, 0.04, 0.02)) -> RadialFunction:
    """Richardson limit of -d_s t^{1-2s} dW/dt: approximates (-Lap)^s w.

    dW/dt uses centered differences with step t/8; successive levels are
    extrapolated with the leading correction order 2-2s.  Values live on
    the nodes of w's mesh (the boundary node is zeroed; the trace is only
    reliable on interior windows, the profile having a corner at r = 1).
    """
    ts = np.asarray(sorted(t_sequence, reverse=True), dtype=float)
    if len(ts) < 2:
        raise ValueError("need at least two heights to extrapolate")
    s = spec.order
    ds = special.extension_ds(s)
    radii = w.mesh.nodes[:-1]

    traces = []
    for t in ts:
        dt = t / 8.0
        wp = _extension_values(w, radii, t + dt, spec)
        wm = _extension_values(w, radii, t - dt, spec)
        traces.append(-ds * t ** (1.0 - 2.0 * s) * (wp - wm) / (2.0 * dt))

    q = 2.0 - 2.0 * s
    extrap = []
    for g0, g1, t0, t1 in zip(traces[:-1], traces[1:], ts[:-1], ts[1:]):
        theta = (t1 / t0) ** q
        extrap.append((g1 - theta * g0) / (1.0 - theta))
    if len(extrap) >= 2:
        # agreement is only demanded away from the boundary corner of w
        win = radii <= 0.9
        a, b = extrap[-2][win], extrap[-1][win]
        scale = max(float(np.max(np.abs(b))), 1e-300)
        dev = float(np.max(np.abs(a - b))) / scale
        if dev > 0.2:
            raise ExtrapolationError(
                f"successive Neumann-trace estimates differ by {dev:.1%}"
            )
    vals = np.append(extrap[-1], 0.0)
    return RadialFunction(w.mesh, vals)


def moment_limit(w: RadialFunction, spec: KernelSpec, t_large: float) -> float:
    """Ratio t^N W(0, t) / (P(N, s) * integral of w over the whole space)."""
    if t_large < 20.0:
        raise ValueError("moment limit needs t_large >= 20")
    total = radial_integral(w.mesh, spec.dim, w)
    w0 = float(_extension_values(w, np.array([0.0]), float(t_large), spec)[0])
    pns = special.poisson_pns(spec.dim, spec.order)
    return t_large ** spec.dim * w0 / (pns * total)
