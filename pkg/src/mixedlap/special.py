"""Operator constants and reduced angular kernels.

Everything here is exact-formula material: the fractional-Laplacian
normalization C(N,s), the extension constant d_s, the Poisson constant
P(N,s), sphere areas, normalized zonal (Gegenbauer) weights, and the
one-dimensional kernels obtained by integrating the Riesz kernel
|x - y|^-(N+2s) over spheres:

    kappa_l(r, rho) = omega_{N-2} int_0^pi (r^2 + rho^2 - 2 r rho cos t)^(-(N+2s)/2)
                      G_l(cos t) sin^{N-2} t dt

with G_l the degree-l Gegenbauer polynomial normalized to G_l(1) = 1
(Chebyshev for N = 2, where omega_0 = 2 and sin^0 = 1).

Near the diagonal the kernel behaves like

    kappa_l(r, rho) ~ omega_{N-2} J(N,s) (r rho)^(-(N-1)/2) |r - rho|^(-1-2s),
    J(N,s) = B((N-1)/2, s + 1/2) / 2,

and the evaluators below expose that leading part in closed form
(`kappa_tilde`) together with a cancellation-free residual
(`kappa_residual`), which is what the Galerkin assembly uses for
near-diagonal element pairs.  The raw quadrature path switches to a
geometrically graded composite rule close to the diagonal.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaln, gammaln, roots_legendre

__all__ = [
    "DomainError",
    "SingularKernelError",
    "KernelSpec",
    "normalization_cns",
    "extension_ds",
    "poisson_pns",
    "surface_area",
    "zonal_weight",
    "zonal_kernel",
    "kappa_tilde",
    "kappa_residual",
    "kappa_deficit",
    "diagonal_strength",
]


class DomainError(ValueError):
    """Raised when an argument leaves the admissible parameter domain."""


class SingularKernelError(ValueError):
    """Raised when a kernel is requested exactly on the diagonal r == rho."""


def _check_dim(dim: int) -> int:
    if int(dim) != dim or dim < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {dim}")
    return int(dim)


def _check_order(s: float) -> float:
    if not (0.0 < s < 1.0):
        raise DomainError(f"fractional order must lie in (0, 1), got {s}")
    return float(s)


def normalization_cns(dim: int, s: float) -> float:
    """Fractional Laplacian normalization C(N, s).

    C(N,s) = 2^{2s} s Gamma((N+2s)/2) / (pi^{N/2} Gamma(1-s)); with this
    choice (-Delta)^s -> -Delta as s -> 1.
    """
    dim = _check_dim(dim)
    s = _check_order(s)
    lg = gammaln((dim + 2.0 * s) / 2.0) - gammaln(1.0 - s)
    return float(2.0 ** (2.0 * s) * s * np.exp(lg) / np.pi ** (dim / 2.0))


def extension_ds(s: float) -> float:
    """Neumann-trace constant d_s = 2^{2s-1} Gamma(s) / Gamma(1-s)."""
    s = _check_order(s)
    return float(2.0 ** (2.0 * s - 1.0) * np.exp(gammaln(s) - gammaln(1.0 - s)))


def poisson_pns(dim: int, s: float) -> float:
    """Extension Poisson-kernel constant P(N, s).

    1/P = int_{R^N} (1+|x|^2)^{-(N+2s)/2} dx = pi^{N/2} Gamma(s) / Gamma((N+2s)/2).
    """
    dim = _check_dim(dim)
    s = _check_order(s)
    lg = gammaln((dim + 2.0 * s) / 2.0) - gammaln(s)
    return float(np.exp(lg) / np.pi ** (dim / 2.0))


def surface_area(dim: int) -> float:
    """|S^{N-1}| = 2 pi^{N/2} / Gamma(N/2); by convention |S^0| = 2."""
    if int(dim) != dim or dim < 1:
        raise DomainError(f"dimension must be an integer >= 1, got {dim}")
    return float(2.0 * np.pi ** (dim / 2.0) / np.exp(gammaln(dim / 2.0)))


def diagonal_strength(dim: int, s: float) -> float:
    """J(N,s) = B((N-1)/2, s+1/2)/2, the diagonal kernel coefficient."""
    dim = _check_dim(dim)
    s = _check_order(s)
    lg = gammaln((dim - 1.0) / 2.0) + gammaln(s + 0.5) - gammaln((dim + 2.0 * s) / 2.0)
    return float(0.5 * np.exp(lg))


# ---------------------------------------------------------------------------
# zonal weights


@functools.lru_cache(maxsize=None)
def _zonal_coeffs(ell: int, dim: int) -> tuple[float, ...]:
    """Monomial coefficients (ascending) of G_l normalized to G_l(1) = 1."""
    if ell == 0:
        return (1.0,)
    if dim == 2:
        # Chebyshev T_l
        c = np.zeros(ell + 1)
        c[ell] = 1.0
        return tuple(np.polynomial.chebyshev.cheb2poly(c))
    lam = (dim - 2.0) / 2.0
    prev = np.array([1.0])
    cur = np.array([0.0, 2.0 * lam])
    for k in range(2, ell + 1):
        nxt = np.zeros(k + 1)
        nxt[1:] += 2.0 * (k - 1.0 + lam) / k * cur
        nxt[: k - 1] -= (k - 2.0 + 2.0 * lam) / k * prev
        prev, cur = cur, nxt
    return tuple(cur / np.polynomial.polynomial.polyval(1.0, cur))


@functools.lru_cache(maxsize=None)
def _zonal_qcoeffs(ell: int, dim: int) -> tuple[float, ...]:
    """Coefficients of Q_l = (G_l - 1)/(t - 1), used near t = 1."""
    g = np.array(_zonal_coeffs(ell, dim))
    g[0] -= 1.0
    q, rem = np.polynomial.polynomial.polydiv(g, np.array([-1.0, 1.0]))
    assert abs(rem[0]) < 1e-12
    return tuple(q)


def zonal_weight(ell: int, dim: int, t):
    """Normalized zonal polynomial G_l(t) on [-1, 1] (G_l(1) = 1)."""
    dim = _check_dim(dim)
    if int(ell) != ell or ell < 0:
        raise DomainError(f"sector must be a nonnegative integer, got {ell}")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise DomainError("zonal weight argument must lie in [-1, 1]")
    out = np.polynomial.polynomial.polyval(t, np.array(_zonal_coeffs(int(ell), dim)))
    return out if out.ndim else float(out)


def zonal_deriv_at_one(ell: int, dim: int) -> float:
    """G_l'(1) = l (l + N - 2) / (N - 1)."""
    return ell * (ell + dim - 2.0) / (dim - 1.0)


# ---------------------------------------------------------------------------
# kernel spec


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of one angular-sector kernel."""

    dim: int
    order: float
    sector: int = 0
    quad_order: int = 96

    def __post_init__(self):
        _check_dim(self.dim)
        _check_order(self.order)
        if int(self.sector) != self.sector or self.sector < 0:
            raise DomainError(f"sector must be a nonnegative integer, got {self.sector}")
        if int(self.quad_order) != self.quad_order or self.quad_order < 8:
            raise DomainError(f"quad_order must be an integer >= 8, got {self.quad_order}")

    @property
    def exponent(self) -> float:
        return self.dim + 2.0 * self.order


# ---------------------------------------------------------------------------
# quadrature rules (cached)


@functools.lru_cache(maxsize=None)
def gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on (0, 1)."""
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@functools.lru_cache(maxsize=None)
def _theta_plain(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss01(order)
    return np.pi * x, np.pi * w


@functools.lru_cache(maxsize=None)
def _theta_graded(levels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on (0, pi), geometrically graded toward 0."""
    x, w = gauss01(order)
    cuts = np.pi * 0.5 ** np.arange(levels + 1)
    nodes, weights = [], []
    for hi, lo in zip(cuts[:-1], cuts[1:]):
        nodes.append(lo + (hi - lo) * x)
        weights.append((hi - lo) * w)
    # innermost interval (0, cuts[-1]]
    nodes.append(cuts[-1] * x)
    weights.append(cuts[-1] * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _graded_levels(e2_min: float) -> int:
    """Levels needed so that the innermost interval resolves scale sqrt(e2)."""
    e = np.sqrt(min(max(e2_min, 1e-28), 1e28))
    return int(np.clip(np.ceil(np.log2(np.pi / e)) + 3, 8, 52))


# ---------------------------------------------------------------------------
# kernel evaluators


def _angular_factor(theta: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """G_l(cos theta) sin^{N-2}(theta) for the theta integrand."""
    ct = np.cos(theta)
    g = np.polynomial.polynomial.polyval(ct, np.array(_zonal_coeffs(spec.sector, spec.dim)))
    if spec.dim > 2:
        g = g * np.sin(theta) ** (spec.dim - 2)
    return g


def _kernel_quad(rr, pp, spec: KernelSpec, exponent: float, offset2: float,
                 theta: np.ndarray, wtheta: np.ndarray) -> np.ndarray:
    """sum_j w_j G_l(cos t_j) sin^{N-2} t_j (d^2 + 4 r rho sin^2(t_j/2))^(-nu).

    The distance is expanded in the cancellation-free form; chunked matmul.
    """
    nu = 0.5 * exponent
    gv = _angular_factor(theta, spec) * wtheta
    sh = _sin_half_sq(theta)
    d2 = ((rr - pp) ** 2 + offset2).ravel()
    m = (4.0 * rr * pp).ravel()
    out = np.empty_like(d2)
    chunk = max(1, int(4e6 // max(theta.size, 1)))
    for i in range(0, d2.size, chunk):
        base = d2[i:i + chunk, None] + m[i:i + chunk, None] * sh[None, :]
        out[i:i + chunk] = np.exp(-nu * np.log(base)) @ gv
    return out.reshape(np.shape(rr))


def zonal_kernel(r, rho, spec: KernelSpec, exponent: float | None = None,
                 offset2: float = 0.0):
    """Evaluate kappa_l(r, rho) (optionally with t^2 offset in the distance).

    Uses plain Gauss-Legendre of order ``spec.quad_order`` away from the
    diagonal and a geometrically graded composite rule when
    |r - rho| / (r + rho) < 0.02 (with ``offset2`` folded into the distance).
    Exact diagonal evaluation without offset raises ``SingularKernelError``.
    """
    ex = spec.exponent if exponent is None else float(exponent)
    rr = np.asarray(r, dtype=float)
    pp = np.asarray(rho, dtype=float)
    scalar = rr.ndim == 0 and pp.ndim == 0
    rr, pp = np.broadcast_arrays(np.atleast_1d(rr), np.atleast_1d(pp))
    rr = rr.astype(float).ravel()
    pp = pp.astype(float).ravel()
    if np.any(rr < 0.0) or np.any(pp < 0.0):
        raise DomainError("radii must be nonnegative")
    d2 = (rr - pp) ** 2 + offset2
    if np.any(d2 == 0.0):
        raise SingularKernelError("kernel evaluated on the diagonal r == rho")
    out = np.empty_like(rr)
    rel = d2 / (rr + pp) ** 2
    near = rel < 0.02 ** 2
    far = ~near
    omega = surface_area(spec.dim - 1)
    if np.any(far):
        th, wt = _theta_plain(spec.quad_order)
        out[far] = _kernel_quad(rr[far], pp[far], spec, ex, offset2, th, wt)
    if np.any(near):
        e2 = d2[near] / (rr[near] * pp[near])
        th, wt = _theta_graded(_graded_levels(float(e2.min())), max(spec.quad_order // 8, 10))
        out[near] = _kernel_quad(rr[near], pp[near], spec, ex, offset2, th, wt)
    out *= omega
    return float(out[0]) if scalar else out.reshape(np.broadcast(np.atleast_1d(r), np.atleast_1d(rho)).shape)


def kappa_tilde(r, rho, dim: int, s: float):
    """Closed-form diagonal part omega_{N-2} J (r rho)^{-(N-1)/2} |r-rho|^{-1-2s}."""
    rr = np.asarray(r, dtype=float)
    pp = np.asarray(rho, dtype=float)
    c = surface_area(dim - 1) * diagonal_strength(dim, s)
    return c * (rr * pp) ** (-(dim - 1.0) / 2.0) * np.abs(rr - pp) ** (-1.0 - 2.0 * s)


def _sin_half_sq(theta: np.ndarray) -> np.ndarray:
    x = np.sin(0.5 * theta)
    return x * x


def _four_sin_sq_minus_theta_sq(theta: np.ndarray) -> np.ndarray:
    """4 sin^2(t/2) - t^2, computed without cancellation."""
    out = np.empty_like(theta)
    small = theta < 0.6
    t2 = theta[small] ** 2
    # -t^4/12 + t^6/360 - t^8/20160 + t^10/1814400
    out[small] = -t2 * t2 / 12.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0 * (1.0 - t2 / 90.0)))
    tb = theta[~small]
    out[~small] = 4.0 * _sin_half_sq(tb) - tb * tb
    return out


def _sinc_minus_one(theta: np.ndarray) -> np.ndarray:
    """sin(t)/t - 1, series-stable for small t."""
    out = np.empty_like(theta)
    small = theta < 1e-3
    t2 = theta[small] ** 2
    out[small] = -t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0))
    tb = theta[~small]
    out[~small] = np.sin(tb) / tb - 1.0
    return out


def _bracket(theta: np.ndarray, e2: np.ndarray, spec: KernelSpec, nu: float) -> np.ndarray:
    """R * G * S - 1 for the residual integrand, free of cancellation.

    R = ((e^2 + 4 sin^2(t/2)) / (e^2 + t^2))^(-nu), G = G_l(cos t),
    S = (sin t / t)^(N-2); every factor is computed as 1 + small.
    """
    th = theta[None, :]
    den = e2[:, None] + th * th
    delta = _four_sin_sq_minus_theta_sq(theta)[None, :] / den
    a = np.expm1(-nu * np.log1p(delta))
    ct = np.cos(theta)
    qv = np.polynomial.polynomial.polyval(ct, np.array(_zonal_qcoeffs(spec.sector, spec.dim))) \
        if spec.sector > 0 else np.zeros_like(theta)
    b = (-2.0 * _sin_half_sq(theta) * qv)[None, :]
    if spec.dim > 2:
        sm1 = _sinc_minus_one(theta)
        c = np.expm1((spec.dim - 2) * np.log1p(sm1))[None, :]
    else:
        c = np.zeros_like(b)
    return a + b + c + a * b + a * c + b * c + a * b * c


def _theta_tail(e2: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """int_pi^inf t^{N-2} (e^2 + t^2)^{-nu} dt, exactly (incomplete beta)."""
    a = 0.5 * (1.0 + 2.0 * spec.order)
    b = 0.5 * (spec.dim - 1.0)
    return (0.5 * np.exp(betaln(a, b)) * e2 ** (-a)
            * betainc(a, b, e2 / (e2 + np.pi ** 2)))


def kappa_residual(r, rho, spec: KernelSpec) -> np.ndarray:
    """kappa_l - kappa_tilde, evaluated without cancellation at any separation.

    kappa_l - kt = omega_{N-2} (r rho)^{-nu} [ int_0^pi t^{N-2}(e^2+t^2)^{-nu} bracket dt
                                               - int_pi^inf t^{N-2}(e^2+t^2)^{-nu} dt ].
    """
    rr = np.atleast_1d(np.asarray(r, dtype=float)).ravel()
    pp = np.atleast_1d(np.asarray(rho, dtype=float)).ravel()
    rr, pp = np.broadcast_arrays(rr, pp)
    nu = 0.5 * spec.exponent
    prod = rr * pp
    e2 = (rr - pp) ** 2 / prod
    th, wt = _theta_graded(_graded_levels(float(e2.min())), 10)
    den = e2[:, None] + th[None, :] ** 2
    core = np.exp(-nu * np.log(den))
    if spec.dim > 2:
        core = core * th[None, :] ** (spec.dim - 2)
    i1 = (core * _bracket(th, e2, spec, nu)) @ wt
    omega = surface_area(spec.dim - 1)
    return omega * prod ** (-nu) * (i1 - _theta_tail(e2, spec))


def kappa_deficit(r, rho, spec: KernelSpec) -> np.ndarray:
    """kappa_0 - kappa_l >= 0, via the (1 - G_l) form (no cancellation).

    kappa_0 - kappa_l = omega_{N-2} (r rho)^{-nu} int_0^pi (e^2 + 4 sin^2(t/2))^{-nu}
                        2 sin^2(t/2) Q_l(cos t) sin^{N-2} t dt.
    """
    if spec.sector == 0:
        rr = np.broadcast_arrays(np.atleast_1d(r), np.atleast_1d(rho))[0]
        return np.zeros_like(np.asarray(rr, dtype=float))
    rr = np.atleast_1d(np.asarray(r, dtype=float)).ravel()
    pp = np.atleast_1d(np.asarray(rho, dtype=float)).ravel()
    rr, pp = np.broadcast_arrays(rr, pp)
    nu = 0.5 * spec.exponent
    prod = rr * pp
    e2 = (rr - pp) ** 2 / prod
    rel = e2 / 4.0  # ~ (d/(r+rho))^2 for r ~ rho
    if float(rel.min()) < 0.02 ** 2:
        th, wt = _theta_graded(_graded_levels(float(e2.min())), 10)
    else:
        th, wt = _theta_plain(spec.quad_order)
    ct = np.cos(th)
    qv = np.polynomial.polynomial.polyval(ct, np.array(_zonal_qcoeffs(spec.sector, spec.dim)))
    f = 2.0 * _sin_half_sq(th) * qv
    if spec.dim > 2:
        f = f * np.sin(th) ** (spec.dim - 2)
    base = e2[:, None] + 4.0 * _sin_half_sq(th)[None, :]
    out = np.exp(-nu * np.log(base)) @ (f * wt)
    omega = surface_area(spec.dim - 1)
    return omega * prod ** (-nu) * out
