"""Sector-wise Galerkin assembly of the mixed local-nonlocal forms.

For profiles f, g on the mesh and angular sector l (spherical harmonics
normalized so that int_{S^{N-1}} Y_l^2 dS = omega_{N-1}; sector 0 profiles
are plain radial functions), the assembled matrices realize

    a_loc(f,g) = omega_{N-1} [ int f' g' r^{N-1} dr + mu_l int f g r^{N-3} dr ],
    mass(f,g)  = omega_{N-1} int f g W(r) r^{N-1} dr,
    a_nl(f,g)  = omega_{N-1} [ (C/2) II df dg kappa_l(r,rho) (r rho)^{N-1}
                               + C int f g (Vhat_l + tail0)(r) r^{N-1} dr ],

with mu_l = l(l+N-2), df = f(r)-f(rho), Vhat_l(r) = int_0^R
(kappa_0-kappa_l) rho^{N-1} drho (zero for l = 0), and tail0(r) =
int_R^inf kappa_0 rho^{N-1} drho.  The double integral runs over (0,R)^2
with profiles extended by zero past r = 1; splitting off the exterior
reduces the tail weight to the kappa_0 moment for every sector, so
a_nl(f,f) equals the full Gagliardo form (C/2) II |u(x)-u(y)|^2
|x-y|^{-N-2s} dx dy of u = f(|x|) Y_l.

Element-pair quadrature: separated pairs use tensor Gauss rules sized by
the gap ratio; pairs at or near the diagonal split the kernel into the
closed-form diagonal part kappa_tilde (Gauss-Jacobi rules matched to the
|r-rho|^{-1-2s} singularity, Duffy corner triangles for touching pairs)
plus the smooth residual of :mod:`mixedlap.special`.  The singular rules
are refinement-checked on a few elements per assembly; a rule that fails
to converge raises ``QuadratureError``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import cho_factor, cho_solve
from scipy.special import betaln, roots_jacobi

from . import special
from .mesh import RadialMesh, RadialFunction
from .special import KernelSpec

__all__ = [
    "QuadratureError",
    "SectorOperator",
    "assemble_local",
    "assemble_mass",
    "assemble_nonlocal",
    "assemble_operator",
    "gagliardo_seminorm",
    "apply_fractional",
]


class QuadratureError(RuntimeError):
    pass


def _jac01(n: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for int_0^1 x^beta f(x) dx, beta > -1."""
    x, w = roots_jacobi(n, 0.0, beta)
    return 0.5 * (x + 1.0), w * 0.5 ** (beta + 1.0)


@dataclass(frozen=True)
class _Rules:
    """Singular-pair quadrature rules for one assembly order."""

    u_jac: tuple[np.ndarray, np.ndarray]          # weight u^{1-2s} on (0,1)
    t_jac: tuple[np.ndarray, np.ndarray]          # weight t^{2-2s} on (0,1)
    gl_inner: tuple[np.ndarray, np.ndarray]
    gl_beta: tuple[np.ndarray, np.ndarray]
    gl_graded: tuple[np.ndarray, np.ndarray]


def _make_rules(spec: KernelSpec, n: int) -> _Rules:
    s = spec.order
    return _Rules(
        u_jac=_jac01(n, 1.0 - 2.0 * s),
        t_jac=_jac01(n, 2.0 - 2.0 * s),
        gl_inner=special.gauss01(max(n - 4, 6)),
        gl_beta=special.gauss01(max(n - 4, 6)),
        gl_graded=special.gauss01(n),
    )


def _residual_batch(rr: np.ndarray, pp: np.ndarray, spec: KernelSpec,
                    rows: int = 8192) -> np.ndarray:
    """Chunked kappa_residual; keeps the (pairs x theta) workspace bounded."""
    out = np.empty(rr.size)
    for i in range(0, rr.size, rows):
        sl = slice(i, i + rows)
        out[sl] = special.kappa_residual(rr[sl], pp[sl], spec)
    return out


# ---------------------------------------------------------------------------
# local and mass forms


def _element_gauss(mesh: RadialMesh, npts: int = 4):
    """Gauss points/weights on every interior element, shapes (M, npts)."""
    x, w = special.gauss01(npts)
    lo = mesh.nodes[:-1]
    h = mesh.spacings()
    return lo[:, None] + h[:, None] * x[None, :], h[:, None] * w[None, :]


def _hat_values(mesh: RadialMesh, r: np.ndarray) -> np.ndarray:
    """Local P1 shape functions at element points, shape (M, 2, npts)."""
    x = (r - mesh.nodes[:-1, None]) / mesh.spacings()[:, None]
    return np.stack([1.0 - x, x], axis=1)


def _dof_nodes(mesh: RadialMesh, sector: int) -> np.ndarray:
    return np.arange(1 if sector > 0 else 0, mesh.m)


def _scatter_elements(mesh: RadialMesh, cells: np.ndarray) -> np.ndarray:
    """Accumulate per-element 2x2 blocks (M,2,2) into the node matrix."""
    nn = mesh.nodes.size
    A = np.zeros((nn, nn))
    idx = np.arange(mesh.m)
    for a in range(2):
        for b in range(2):
            np.add.at(A, (idx + a, idx + b), cells[:, a, b])
    return A


def _weighted_node_mass(mesh: RadialMesh, wgt: np.ndarray, rq: np.ndarray,
                        wq: np.ndarray, dim: int) -> np.ndarray:
    phi = _hat_values(mesh, rq)
    cells = np.einsum("maq,mbq,mq->mab", phi, phi, wq * wgt * rq ** (dim - 1))
    return _scatter_elements(mesh, cells)


def assemble_local(mesh: RadialMesh, spec: KernelSpec) -> np.ndarray:
    """omega_{N-1} [ (f',g')_{r^{N-1}} + mu_l (f,g)_{r^{N-3}} ] over the dofs."""
    dim, ell = spec.dim, spec.sector
    mu = ell * (ell + dim - 2.0)
    rq, wq = _element_gauss(mesh)
    h = mesh.spacings()
    dphi = np.stack([-1.0 / h, 1.0 / h], axis=1)
    cells = np.einsum("ma,mb,mq->mab", dphi, dphi, wq * rq ** (dim - 1))
    if mu != 0.0:
        # r^{N-3} is integrable against dof hats (they vanish at r = 0); the
        # node-0 entries this row produces are dropped at restriction
        phi = _hat_values(mesh, rq)
        cells = cells + mu * np.einsum("maq,mbq,mq->mab", phi, phi,
                                       wq * rq ** (dim - 3))
    A = _scatter_elements(mesh, cells)
    d = _dof_nodes(mesh, ell)
    return special.surface_area(dim) * A[np.ix_(d, d)]


def assemble_mass(mesh: RadialMesh, spec: KernelSpec, weight=None) -> np.ndarray:
    """omega_{N-1} int f g W r^{N-1} dr over the dofs; W callable or None."""
    rq, wq = _element_gauss(mesh)
    if weight is None:
        wgt = np.ones_like(rq)
    elif callable(weight):
        wgt = np.asarray(weight(rq), dtype=float)
    else:
        raise TypeError("weight must be None or a callable of r")
    A = _weighted_node_mass(mesh, wgt, rq, wq, spec.dim)
    d = _dof_nodes(mesh, spec.sector)
    return special.surface_area(spec.dim) * A[np.ix_(d, d)]


# ---------------------------------------------------------------------------
# nonlocal form: element-pair machinery


def _classify_pairs(all_nodes: np.ndarray, m_int: int):
    """Split element pairs into touching / near-diagonal / far-by-order."""
    lo, hi = all_nodes[:-1], all_nodes[1:]
    h = hi - lo
    ne = lo.size
    ia, ib = np.triu_indices(ne, k=1)
    keep = ia <= m_int - 1            # drop pairs fully outside the support
    ia, ib = ia[keep], ib[keep]
    touching = ib == ia + 1
    ta, tb = ia[touching], ib[touching]
    sa, sb = ia[~touching], ib[~touching]
    gap = lo[sb] - hi[sa]
    e2 = gap ** 2 / (hi[sa] * lo[sb])
    near = e2 < 0.04
    na, nb = sa[near], sb[near]
    fa, fb = sa[~near], sb[~near]
    ratio = (gap[~near] + h[fa] + h[fb]) / gap[~near]
    groups = [
        (4, fa[ratio < 1.5], fb[ratio < 1.5]),
        (6, fa[(ratio >= 1.5) & (ratio < 4.0)], fb[(ratio >= 1.5) & (ratio < 4.0)]),
        (8, fa[ratio >= 4.0], fb[ratio >= 4.0]),
    ]
    return (ta, tb), (na, nb), groups


def _scatter_pair(A, na, nb, gaa, gbb, gab, factor=2.0):
    """Add A-side/B-side/cross blocks (pair counted both ways -> factor 2)."""
    for i in range(2):
        for j in range(2):
            np.add.at(A, (na + i, na + j), factor * gaa[:, i, j])
            np.add.at(A, (nb + i, nb + j), factor * gbb[:, i, j])
            np.add.at(A, (na + i, nb + j), factor * gab[:, i, j])
            np.add.at(A, (nb + j, na + i), factor * gab[:, i, j])


def _pair_tensor(lo, h, pa, pb, n, kernel):
    """Tensor-Gauss blocks for separated pairs; kernel(rr, pp) pointwise."""
    xg, wg = special.gauss01(n)
    ra = lo[pa][:, None] + h[pa][:, None] * xg[None, :]
    rb = lo[pb][:, None] + h[pb][:, None] * xg[None, :]
    rr = np.repeat(ra[:, :, None], n, axis=2)
    pp = np.repeat(rb[:, None, :], n, axis=1)
    kw = kernel(rr.ravel(), pp.ravel()).reshape(rr.shape)
    kw *= (rr * pp) ** (kernel.dim - 1)
    kw *= (h[pa][:, None, None] * h[pb][:, None, None]
           * wg[None, :, None] * wg[None, None, :])
    PA = np.stack([1.0 - xg, xg])
    gaa = np.einsum("pq,aq,bq->pab", kw.sum(axis=2), PA, PA)
    gbb = np.einsum("pq,aq,bq->pab", kw.sum(axis=1), PA, PA)
    gab = -np.einsum("pqr,aq,br->pab", kw, PA, PA)
    return gaa, gbb, gab


class _FarKernel:
    def __init__(self, spec: KernelSpec):
        self.spec = spec
        self.dim = spec.dim

    def __call__(self, rr, pp):
        return special.zonal_kernel(rr, pp, self.spec)


class _SplitKernel:
    def __init__(self, spec: KernelSpec):
        self.spec = spec
        self.dim = spec.dim

    def __call__(self, rr, pp):
        return (special.kappa_tilde(rr, pp, self.spec.dim, self.spec.order)
                + _residual_batch(rr, pp, self.spec))


@functools.lru_cache(maxsize=None)
def _origin_moment(spec: KernelSpec) -> float:
    """I = int_0^1 (1-rho)^2 rho^{N-1} kappa_l(1, rho) drho.

    By kernel homogeneity, the element [0,b] paired with itself satisfies
    S_e(0,b) = 2 b^{N+2-2s} I / (N+2-2s): the corner Duffy map separates
    exactly.  The kappa_tilde part of I is a beta function; the residual
    part is a one-off adaptive integral (rho = 1-w^4 softens the
    (1-rho)^{1-2s} edge).
    """
    dim, s = spec.dim, spec.order
    p = (dim - 1.0) / 2.0
    cj = special.surface_area(dim - 1) * special.diagonal_strength(dim, s)
    i_tilde = cj * float(np.exp(betaln(p + 1.0, 2.0 - 2.0 * s)))

    def fw(w):
        rho = 1.0 - w ** 4
        if rho < 1e-12 or w < 1e-12:
            return 0.0
        rv = float(special.kappa_residual(1.0, rho, spec)[0])
        return rv * w ** 8 * rho ** (dim - 1) * 4.0 * w ** 3

    i_res, err = quad(fw, 0.0, 1.0, limit=300, epsabs=1e-13, epsrel=1e-10)
    total = i_tilde + i_res
    if err > 1e-8 * abs(total):
        raise QuadratureError(
            f"origin moment integral not converged for {spec}: err {err:.1e}")
    return total


def _same_element(spec: KernelSpec, a: float, b: float, rules: _Rules) -> float:
    """S_e = II_{e x e} (r-rho)^2 kappa_l (r rho)^{N-1} dr drho.

    Origin element: exact scaling reduction through _origin_moment.
    Otherwise, kappa_tilde part 2 c_J int_0^h u^{1-2s} Phi(u) du with
    Phi(u) = int_a^{b-u} (rho(rho+u))^{(N-1)/2} drho (Gauss-Jacobi in u),
    plus residual part 2 int_0^h u^2 Psi(u) du graded by u = h tau^2.
    """
    dim, s = spec.dim, spec.order
    if a < 1e-14:
        ex = dim + 2.0 - 2.0 * s
        return 2.0 * b ** ex * _origin_moment(spec) / ex
    h = b - a
    p = (dim - 1.0) / 2.0
    cj = special.surface_area(dim - 1) * special.diagonal_strength(dim, s)

    uj, wu = rules.u_jac
    us = h * uj
    wus = h ** (2.0 - 2.0 * s) * wu
    v, wv = rules.gl_inner
    ln = b - us - a
    rho = a + ln[:, None] * v[None, :]
    phi = ln * (((rho * (rho + us[:, None])) ** p) @ wv)
    s_tilde = 2.0 * cj * float(wus @ phi)

    tau, wt = rules.gl_graded
    u2 = h * tau ** 2
    ln2 = b - u2 - a
    rho = a + ln2[:, None] * v[None, :]
    rr = rho + u2[:, None]
    res = _residual_batch(rr.ravel(), rho.ravel(), spec).reshape(rho.shape)
    psi = ln2 * ((res * (rho * rr) ** (dim - 1)) @ wv)
    s_res = 4.0 * h ** 3 * float(np.sum(wt * tau ** 5 * psi))
    return s_tilde + s_res


def _touching_pair(spec: KernelSpec, xm: float, ha: float, hb: float,
                   rules: _Rules) -> np.ndarray:
    """3x3 block over nodes (L, M, R) of elements [xm-ha, xm], [xm, xm+hb].

    Duffy triangles around the corner r = rho = xm: corner distances are
    (ha*t, hb*t*beta) on one triangle and (ha*t*beta, hb*t) on the other.
    The kappa_tilde part carries weight t^{2-2s} (Gauss-Jacobi); the
    residual part is graded by t = tau^2.
    """
    dim, s = spec.dim, spec.order
    cj = special.surface_area(dim - 1) * special.diagonal_strength(dim, s)
    p = (dim - 1.0) / 2.0
    sa = np.array([-1.0 / ha, 1.0 / ha, 0.0])    # left-element slopes per node
    sb = np.array([0.0, -1.0 / hb, 1.0 / hb])    # right-element slopes
    bq, wb = rules.gl_beta
    ones = np.ones_like(bq)
    out = np.zeros((3, 3))
    for beta_a, beta_b in ((ones, bq), (bq, ones)):
        # phi_i(r) - phi_i(rho) = -t d_i(beta); the sign cancels in products
        dvec = ha * beta_a[None, :] * sa[:, None] + hb * beta_b[None, :] * sb[:, None]
        dist = ha * beta_a + hb * beta_b
        tj, wtj = rules.t_jac
        aa = ha * tj[:, None] * beta_a[None, :]
        bb = hb * tj[:, None] * beta_b[None, :]
        fval = cj * ((xm - aa) * (xm + bb)) ** p * dist[None, :] ** (-1.0 - 2.0 * s)
        out += np.einsum("ib,jb,qb->ij", dvec, dvec,
                         fval * (ha * hb) * wtj[:, None] * wb[None, :])
        tau, wt = rules.gl_graded
        t = tau ** 2
        aa = ha * t[:, None] * beta_a[None, :]
        bb = hb * t[:, None] * beta_b[None, :]
        r = xm - aa
        rho = xm + bb
        res = _residual_batch(r.ravel(), rho.ravel(), spec).reshape(r.shape)
        fval = res * (r * rho) ** (dim - 1) * t[:, None] ** 3
        out += np.einsum("ib,jb,qb->ij", dvec, dvec,
                         fval * (ha * hb) * (2.0 * wt * tau)[:, None] * wb[None, :])
    return out


def _tail_weight(r: np.ndarray, spec: KernelSpec, cutoff: float,
                 n: int = 12) -> np.ndarray:
    """tail0(r) = int_R^inf kappa_0 rho^{N-1} drho, via rho = R/v."""
    s = spec.order
    spec0 = KernelSpec(spec.dim, s, 0, spec.quad_order)
    v, wv = _jac01(n, 2.0 * s - 1.0)
    rr = np.repeat(r[:, None], n, axis=1)
    pp = np.broadcast_to((cutoff / v)[None, :], rr.shape)
    g = special.zonal_kernel(rr.ravel(), pp.ravel(), spec0).reshape(rr.shape)
    g = g * pp ** (spec.dim + 2.0 * s)
    return cutoff ** (-2.0 * s) * (g @ wv)


def _deficit_weight(r: np.ndarray, spec: KernelSpec, cutoff: float,
                    n: int = 14) -> np.ndarray:
    """Vhat_l(r) = int_0^R (kappa_0 - kappa_l) rho^{N-1} drho at the points r.

    The integrand has an integrable |rho - r|^{1-2s} edge for s > 1/2, so
    both sides of rho = r are power-graded toward it.
    """
    if spec.sector == 0:
        return np.zeros_like(r)
    gamma = float(np.clip(2.0 / (2.0 - 2.0 * spec.order), 1.5, 12.0))
    tau, wt = special.gauss01(n)
    tg = tau ** gamma
    base_w = gamma * tau ** (gamma - 1.0) * wt
    parts = []
    for k, ri in enumerate(np.asarray(r, dtype=float)):
        for side, sign in ((ri, -1.0), (cutoff - ri, 1.0)):
            rho = ri + sign * side * tg
            keep = rho > 1e-12
            parts.append((np.full(keep.sum(), ri), rho[keep],
                          side * base_w[keep], np.full(keep.sum(), k)))
    rr = np.concatenate([q[0] for q in parts])
    pp = np.concatenate([q[1] for q in parts])
    ww = np.concatenate([q[2] for q in parts])
    own = np.concatenate([q[3] for q in parts]).astype(int)
    order = np.argsort((rr - pp) ** 2 / (rr * pp))  # localize deep theta rules
    out = np.zeros(np.asarray(r).size)
    step = 16384
    for i in range(0, rr.size, step):
        sl = order[i:i + step]
        dv = special.kappa_deficit(rr[sl], pp[sl], spec)
        np.add.at(out, own[sl], dv * pp[sl] ** (spec.dim - 1) * ww[sl])
    return out


def assemble_nonlocal(mesh: RadialMesh, spec: KernelSpec,
                      refine_check: bool = True) -> np.ndarray:
    """Dense matrix of the sector nonlocal form over the dofs."""
    dim, s, ell = spec.dim, spec.order, spec.sector
    allk = mesh.all_nodes
    nn = allk.size
    m_int = mesh.m
    lo, hi = allk[:-1], allk[1:]
    h = hi - lo
    enode = np.arange(nn - 1)
    A = np.zeros((nn, nn))

    (ta, tb), (na, nb), far_groups = _classify_pairs(allk, m_int)
    far_kernel = _FarKernel(spec)
    for n, pa, pb in far_groups:
        if pa.size:
            _scatter_pair(A, enode[pa], enode[pb],
                          *_pair_tensor(lo, h, pa, pb, n, far_kernel))
    if na.size:
        _scatter_pair(A, enode[na], enode[nb],
                      *_pair_tensor(lo, h, na, nb, 10, _SplitKernel(spec)))

    rules = _make_rules(spec, 12)
    rules_hi = _make_rules(spec, 18) if refine_check else None

    probe = {1, m_int // 2, m_int - 1}
    for e in range(m_int):
        se = _same_element(spec, lo[e], hi[e], rules)
        if refine_check and e in probe:
            se2 = _same_element(spec, lo[e], hi[e], rules_hi)
            if abs(se2 - se) > 5e-6 * abs(se2):
                raise QuadratureError(
                    f"same-element rule not converged on element {e}: "
                    f"{se:.6e} vs {se2:.6e}")
        A[e:e + 2, e:e + 2] += np.array([[1.0, -1.0], [-1.0, 1.0]]) * se / h[e] ** 2

    # the origin-corner pair (0,1) carries a (1-t)^{(N-1)/2} geometry kink the
    # generic rules resolve only slowly; its block is O(h^{N+2-2s}) small, so
    # it is excluded from the convergence probe
    for ea, eb in zip(ta, tb):
        blk = _touching_pair(spec, allk[eb], h[ea], h[eb], rules)
        if refine_check and ea in (m_int // 2, m_int - 1):
            blk2 = _touching_pair(spec, allk[eb], h[ea], h[eb], rules_hi)
            if np.abs(blk2 - blk).max() > 5e-6 * np.abs(blk2).max():
                raise QuadratureError(
                    f"touching-pair rule not converged at element {ea}")
        idx = np.array([ea, eb, eb + 1])
        A[np.ix_(idx, idx)] += 2.0 * blk

    cns = special.normalization_cns(dim, s)
    d = _dof_nodes(mesh, ell)
    K = 0.5 * cns * A[np.ix_(d, d)]

    # sector deficit + exterior tail enter as a weighted mass over the dofs
    rq, wq = _element_gauss(mesh)
    wgt = _tail_weight(rq.ravel(), spec, mesh.exterior_cutoff).reshape(rq.shape)
    if ell > 0:
        wgt = wgt + _deficit_weight(rq.ravel(), spec,
                                    mesh.exterior_cutoff).reshape(rq.shape)
    K = K + cns * _weighted_node_mass(mesh, wgt, rq, wq, dim)[np.ix_(d, d)]

    K *= special.surface_area(dim)
    return 0.5 * (K + K.T)


# ---------------------------------------------------------------------------
# assembled operator bundle


@dataclass
class SectorOperator:
    """Stiffness/mass triple for one angular sector on one mesh."""

    spec: KernelSpec
    mesh: RadialMesh
    k_loc: np.ndarray
    k_nl: np.ndarray
    mass: np.ndarray

    @property
    def sector(self) -> int:
        return self.spec.sector

    @property
    def ndof(self) -> int:
        return self.k_loc.shape[0]

    def dof_nodes(self) -> np.ndarray:
        return _dof_nodes(self.mesh, self.spec.sector)

    def restrict(self, f) -> np.ndarray:
        vals = f.values if isinstance(f, RadialFunction) else np.asarray(f, dtype=float)
        return vals[self.dof_nodes()]

    def extend(self, vec: np.ndarray) -> RadialFunction:
        vals = np.zeros_like(self.mesh.nodes)
        vals[self.dof_nodes()] = vec
        return RadialFunction(self.mesh, vals)

    def stiffness(self) -> np.ndarray:
        return self.k_loc + self.k_nl


def assemble_operator(mesh: RadialMesh, spec: KernelSpec,
                      refine_check: bool = True) -> SectorOperator:
    return SectorOperator(
        spec=spec,
        mesh=mesh,
        k_loc=assemble_local(mesh, spec),
        k_nl=assemble_nonlocal(mesh, spec, refine_check=refine_check),
        mass=assemble_mass(mesh, spec),
    )


def radial_integral(mesh: RadialMesh, dim: int, fn, npts: int = 4) -> float:
    """omega_{N-1} int_0^1 fn(r) r^{N-1} dr with the element Gauss rule.

    Uses the same per-element rule as the mass assembly, so nonlinear
    functionals built from it are exactly consistent with weighted masses.
    """
    rq, wq = _element_gauss(mesh, npts)
    vals = np.asarray(fn(rq), dtype=float)
    return special.surface_area(dim) * float(np.sum(wq * vals * rq ** (dim - 1)))


def gagliardo_seminorm(f: RadialFunction, op: SectorOperator) -> float:
    """sqrt of the assembled nonlocal quadratic form at f."""
    v = op.restrict(f)
    return float(np.sqrt(max(v @ op.k_nl @ v, 0.0)))


def apply_fractional(f: RadialFunction, op: SectorOperator) -> RadialFunction:
    """Mass-matrix Riesz representative of the sector nonlocal operator at f."""
    v = op.restrict(f)
    sol = cho_solve(cho_factor(op.mass), op.k_nl @ v)
    return op.extend(sol)
