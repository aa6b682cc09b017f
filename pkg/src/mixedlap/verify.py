"""Quantitative battery for the qualitative theorems.

Each check turns a statement about the ground state or its linearization
(sign structure of the second eigenfunction, Hopf boundary ratio,
non-degeneracy gaps, continuation stability, small-exponent asymptotics,
uniqueness) into a named margin with an explicit tolerance.  A check passes
iff margin > tolerance, so failures are always attributable to a number.

Negative controls are built in: running the sign battery on the third
eigenfunction, or shifting the linearization potential, must fail the
corresponding check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .assemble import SectorOperator, assemble_operator, radial_integral
from .groundstate import (
    ConvergenceError,
    GroundStateSolution,
    ProblemParams,
    first_eigen_lambda1,
    solve_ground_state,
)
from .mesh import RadialFunction, build_mesh
from .opcache import OperatorCache, cache_key
from .report import CheckResult, VerificationReport
from .special import KernelSpec
from .spectral import (
    lambda_spectrum,
    linearized_potential_mass,
    nondegeneracy_margins,
    sigma_spectrum,
    sigma_spectrum_from_potential,
)

log = logging.getLogger(__name__)

__all__ = [
    "IndeterminateSignError",
    "FoldError",
    "ContinuationTrace",
    "count_sign_changes",
    "hopf_boundary_ratio",
    "ground_state_contract",
    "check_theorem1",
    "check_nondegeneracy",
    "continue_in_s",
    "continue_in_p",
    "small_p_asymptotics",
    "multistart_uniqueness",
    "tau_homotopy_sign_counts",
    "negative_control_third_eigenfunction",
    "negative_control_shifted_potential",
]


class IndeterminateSignError(RuntimeError):
    """Raised when too many nodal values sit inside the zeroing band."""


class FoldError(RuntimeError):
    """Continuation hit a fold: Newton diverged or a margin crossed zero."""

    def __init__(self, knot: float, message: str):
        super().__init__(f"at knot {knot:.6g}: {message}")
        self.knot = knot


# ---------------------------------------------------------------------------
# elementary profile checks


def count_sign_changes(f: RadialFunction, tol: float) -> int:
    """Sign alternations of the nodal sequence, after zeroing |f| < tol*sup.

    Raises IndeterminateSignError when more than 20% of the nodes fall in
    the zeroed band (the profile is then too flat to classify).
    """
    v = np.asarray(f.values, dtype=float)
    sup = float(np.max(np.abs(v)))
    if sup == 0.0:
        raise IndeterminateSignError("zero profile")
    keep = np.abs(v) >= tol * sup
    if np.count_nonzero(~keep) > 0.2 * v.size:
        raise IndeterminateSignError(
            f"{np.count_nonzero(~keep)} of {v.size} nodes zeroed at tol {tol:g}"
        )
    signs = np.sign(v[keep])
    return int(np.count_nonzero(np.diff(signs) != 0))


def hopf_boundary_ratio(f: RadialFunction, layer: float = 0.1) -> float:
    """sign(f(0)) * min over nodes with 1-layer < r < 1 of f(r)/(1-r)."""
    if not 0.0 < layer <= 0.2:
        raise ValueError("layer must lie in (0, 0.2]")
    r = f.mesh.nodes
    inside = (r > 1.0 - layer) & (r < 1.0)
    if not np.any(inside):
        raise ValueError("no mesh nodes inside the boundary layer")
    ratios = f.values[inside] / (1.0 - r[inside])
    return float(np.sign(f.values[0]) * np.min(ratios))


def _normalized(f: RadialFunction) -> RadialFunction:
    """Scale to unit sup norm; fix the sign so the center value is >= 0."""
    v = f.values / np.max(np.abs(f.values))
    if v[0] < 0.0:
        v = -v
    return RadialFunction(f.mesh, v)


def _first_flip_index(values: np.ndarray, tol: float) -> int | None:
    """Node index of the first sign flip (None if single-signed)."""
    sup = float(np.max(np.abs(values)))
    idx = np.flatnonzero(np.abs(values) >= tol * sup)
    signs = np.sign(values[idx])
    flips = np.flatnonzero(np.diff(signs) != 0)
    if flips.size == 0:
        return None
    return int(idx[flips[0] + 1])


def ground_state_contract(sol: GroundStateSolution, *,
                          residual_tol: float = 1e-8,
                          nehari_tol: float = 1e-7,
                          mass_rel_tol: float = 1e-8) -> VerificationReport:
    """The solved-instance contract: residual, shape, and energy identities.

    Positivity and strict radial monotonicity are demanded at every node
    inside the ball; the Nehari violation is absolute and the energy must
    equal (1/2 - 1/p)||u||_p^p to relative mass_rel_tol.
    """
    u = sol.profile.values
    sup = float(np.max(np.abs(u)))
    mass_dev = abs(sol.energy - sol.mass_level) / max(abs(sol.mass_level), 1e-300)
    checks = [
        CheckResult("residual", margin=residual_tol - sol.residual, tolerance=0.0,
                    details={"residual": sol.residual,
                             "residual_rel": sol.residual_rel}),
        CheckResult("positivity", margin=float(np.min(u[:-1])) / sup, tolerance=0.0,
                    details={"min_interior": float(np.min(u[:-1]))}),
        CheckResult("monotonicity", margin=-float(np.max(np.diff(u))) / sup,
                    tolerance=0.0),
        CheckResult("nehari", margin=nehari_tol - sol.nehari_violation,
                    tolerance=0.0, details={"violation": sol.nehari_violation}),
        CheckResult("mass-identity", margin=mass_rel_tol - mass_dev, tolerance=0.0,
                    details={"energy": sol.energy, "mass_level": sol.mass_level}),
    ]
    return VerificationReport(
        checks=checks,
        params=_params_dict(sol.params),
        mesh={"m": int(sol.profile.mesh.m)},
        provenance={"iterations": list(sol.iterations),
                    "lambda1": sol.lambda1, "sup_norm": sol.sup_norm},
    )


# ---------------------------------------------------------------------------
# instance provisioning


def _operator(dim: int, s: float, sector: int, m: int, grading: float,
              cache: OperatorCache | None, quad: int = 96,
              rmax: float = 4.0) -> SectorOperator:
    mesh = build_mesh(m, grading=grading, exterior_cutoff=rmax)
    spec = KernelSpec(dim=dim, order=s, sector=sector, quad_order=quad)
    if cache is None:
        return assemble_operator(mesh, spec)
    return cache.get(mesh, spec)


def _mesh_descriptor(op: SectorOperator) -> dict:
    mesh = op.mesh
    return {
        "m": int(mesh.m),
        "grading": float(mesh.grading),
        "exterior_cutoff": float(mesh.exterior_cutoff),
        "quad_order": int(op.spec.quad_order),
    }


def _params_dict(params: ProblemParams) -> dict:
    return {"dim": params.dim, "s": params.s, "p": params.p, "lam": params.lam}


# ---------------------------------------------------------------------------
# theorem batteries


def check_theorem1(params: ProblemParams, *, m: int = 192, grading: float = 2.0,
                   cache: OperatorCache | None = None, tol: float = 1e-8,
                   eigenfunction_index: int = 2, sign_tol: float = 1e-6,
                   layer: float = 0.1, quad: int = 96,
                   rmax: float = 4.0) -> VerificationReport:
    """Shape battery for the second linearized eigenfunction.

    Six checks: simplicity gap above sigma_k, nonvanishing center value,
    exactly one radial sign change, the center-sign/integral criterion,
    monotonicity on the inner nodal interval, and a negative Hopf boundary
    ratio.  `eigenfunction_index` = 2 targets w_2; 3 is the negative
    control (the third eigenfunction carries two sign changes).
    """
    op = _operator(params.dim, params.s, 0, m, grading, cache, quad, rmax)
    sol = solve_ground_state(op, params, tol=tol)
    k = eigenfunction_index
    sig = sigma_spectrum(op, sol, k=k + 1)
    w = _normalized(sig.functions[k - 1])
    sigma_k = float(sig.values[k - 1])
    gap = float(sig.values[k] - sig.values[k - 1])

    checks = [
        CheckResult(
            "sigma-gap", margin=gap, tolerance=1e-6 * (1.0 + abs(sigma_k)),
            details={"sigma": sig.values[: k + 1]},
        ),
        CheckResult(
            "center-value", margin=float(np.abs(w.values[0])), tolerance=1e-3,
        ),
    ]

    try:
        n_changes = count_sign_changes(w, sign_tol)
        checks.append(CheckResult(
            "sign-changes", margin=1.0 - abs(n_changes - 1), tolerance=0.5,
            details={"count": n_changes},
        ))
    except IndeterminateSignError as err:
        checks.append(CheckResult(
            "sign-changes", margin=-1.0, tolerance=0.5,
            details={"error": str(err)},
        ))

    integral = radial_integral(op.mesh, params.dim, w)
    checks.append(CheckResult(
        "sign-criterion", margin=-float(w.values[0]) * integral, tolerance=0.0,
        details={"center": float(w.values[0]), "integral": integral},
    ))

    flip = _first_flip_index(w.values, sign_tol)
    if flip is None or flip < 3:
        checks.append(CheckResult(
            "inner-monotonicity", margin=-1.0, tolerance=-1e-9,
            details={"error": "no usable inner nodal interval"},
        ))
    else:
        # drop the node adjacent to the interface; its sign is ambiguous
        g = w.values[: flip - 1]
        r = op.mesh.nodes[: flip - 1]
        # slope/r margin: w'(r) vanishes linearly at the center, so the
        # plain max slope degenerates with h; w'(r)/r converges instead
        mid = 0.5 * (r[1:] + r[:-1])
        worst = float(np.max(np.diff(g) / np.diff(r) / mid))
        worst /= float(np.max(np.abs(g)))
        checks.append(CheckResult(
            "inner-monotonicity", margin=-worst, tolerance=-1e-9,
            details={"r0": float(op.mesh.nodes[flip]), "window_nodes": flip - 1},
        ))

    ratio = hopf_boundary_ratio(w, layer)
    checks.append(CheckResult(
        "hopf-ratio", margin=-ratio, tolerance=0.0, details={"ratio": ratio},
    ))

    return VerificationReport(
        checks=checks,
        params=_params_dict(params),
        mesh=_mesh_descriptor(op),
        provenance={
            "cache_key": cache_key(op.mesh, op.spec),
            "eigenfunction_index": k,
            "solver_iterations": list(sol.iterations),
            "residual": sol.residual,
        },
    )


def check_nondegeneracy(params: ProblemParams, *, m: int = 192,
                        grading: float = 2.0,
                        cache: OperatorCache | None = None, tol: float = 1e-8,
                        sectors: tuple[int, ...] = (1, 2),
                        potential_shift: float = 0.0, quad: int = 96,
                        rmax: float = 4.0) -> VerificationReport:
    """Non-degeneracy margins: sigma_1 < -lam < sigma_2, Lam_min(l) > p-1.

    `potential_shift` adds c*Id to the linearization potential; the sigma
    spectrum then shifts exactly by +c (the designed negative control).
    """
    ops = {l: _operator(params.dim, params.s, l, m, grading, cache, quad, rmax)
           for l in (0, *sectors)}
    sol = solve_ground_state(ops[0], params, tol=tol)
    rep = nondegeneracy_margins(ops, sol, sectors=sectors)

    c = float(potential_shift)
    gap_low = rep.gap_low - c
    gap_high = rep.gap_high + c
    noise = 1e-6

    checks = [
        CheckResult("sigma-below", margin=gap_low, tolerance=noise,
                    details={"sigma1": float(rep.sigma[0]) + c}),
        CheckResult("sigma-above", margin=gap_high, tolerance=noise,
                    details={"sigma2": float(rep.sigma[1]) + c}),
    ]
    for l in sectors:
        checks.append(CheckResult(
            f"weighted-gap-l{l}", margin=rep.lam_margin[l], tolerance=noise,
            details={"lam_min": rep.lam_min[l], "p_minus_1": params.p - 1.0},
        ))
    checks.append(CheckResult(
        "radial-eigenpair-value", margin=1e-3 - abs(rep.eig0_value - 1.0),
        tolerance=0.0, details={"value": rep.eig0_value},
    ))
    checks.append(CheckResult(
        "radial-eigenpair-cosine", margin=rep.eig0_cosine - 0.999,
        tolerance=0.0, details={"cosine": rep.eig0_cosine},
    ))

    provenance = {
        "cache_keys": {l: cache_key(ops[l].mesh, ops[l].spec) for l in ops},
        "potential_shift": c,
        "residual": sol.residual,
    }
    if gap_low <= 0.0:
        provenance["note"] = (
            "sigma_1 >= -lam: instance is not a ground-state linearization "
            "with the stated gap; raw margins reported"
        )
    return VerificationReport(
        checks=checks,
        params=_params_dict(params),
        mesh=_mesh_descriptor(ops[0]),
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# continuation


@dataclass
class ContinuationTrace:
    """Solutions and margins along a one-parameter family."""

    parameter: str
    knots: np.ndarray
    profiles: list[np.ndarray]
    payloads: list  # GroundStateSolution per knot (p) or eigen data dict (s)
    margins: list
    sign_data: list[tuple[float, float]]

    def linf_jumps(self) -> np.ndarray:
        out = [
            float(np.max(np.abs(a - b)))
            for a, b in zip(self.profiles[:-1], self.profiles[1:])
        ]
        return np.asarray(out)


def continue_in_s(dim: int, s_knots, *, m: int = 160, grading: float = 2.0,
                  cache: OperatorCache | None = None,
                  sign_tol: float = 1e-6, quad: int = 96,
                  rmax: float = 4.0) -> ContinuationTrace:
    """Track the second radial eigenpair of the pure operator across s.

    At each knot the eigenfunction is sign-fixed (positive center value)
    and the center-sign/integral invariant plus the sign-change count are
    recorded.
    """
    knots = np.asarray(sorted(float(s) for s in np.atleast_1d(s_knots)))
    if np.any(knots <= 0.0) or np.any(knots >= 1.0):
        raise ValueError("s knots must lie in (0, 1)")
    profiles, payloads, margins, sign_data = [], [], [], []
    for s in knots:
        op = _operator(dim, float(s), 0, m, grading, cache, quad, rmax)
        vals, vecs = eigh(op.stiffness(), op.mass, subset_by_index=[0, 2])
        phi2 = _normalized(op.extend(vecs[:, 1]))
        integral = radial_integral(op.mesh, dim, phi2)
        payloads.append({
            "s": float(s),
            "lam1": float(vals[0]),
            "lam2": float(vals[1]),
            "phi2": phi2,
            "sign_changes": count_sign_changes(phi2, sign_tol),
        })
        margins.append({"lam_gap": float(vals[2] - vals[1])})
        sign_data.append((float(phi2.values[0]), integral))
        profiles.append(phi2.values)
    return ContinuationTrace(
        parameter="s", knots=knots, profiles=profiles,
        payloads=payloads, margins=margins, sign_data=sign_data,
    )


def continue_in_p(params: ProblemParams, p_knots, *, m: int = 192,
                  grading: float = 2.0, cache: OperatorCache | None = None,
                  tol: float = 1e-8, monitor=None,
                  sectors: tuple[int, ...] = (1, 2),
                  track_margins: bool = True, quad: int = 96,
                  rmax: float = 4.0) -> ContinuationTrace:
    """Predictor-corrector continuation of the ground state in p.

    Warm-starts Newton at every knot from the previous solution and records
    the non-degeneracy margins along the path.  A diverging solve or a
    margin crossing zero raises FoldError naming the knot (this would
    contradict uniqueness and must surface loudly).
    """
    knots = np.asarray([float(p) for p in np.atleast_1d(p_knots)])
    ops = {l: _operator(params.dim, params.s, l, m, grading, cache, quad, rmax)
           for l in ((0, *sectors) if track_margins else (0,))}
    profiles, payloads, margins, sign_data = [], [], [], []
    prev = None
    for p in knots:
        knot_params = ProblemParams(dim=params.dim, s=params.s, p=float(p),
                                    lam=params.lam)
        try:
            sol = solve_ground_state(ops[0], knot_params, tol=tol, init=prev)
        except (ConvergenceError, ValueError) as err:
            raise FoldError(float(p), f"ground-state solve failed: {err}")
        if not sol.converged:
            raise FoldError(float(p), f"Newton stalled at residual {sol.residual:.3e}")
        if track_margins:
            rep = nondegeneracy_margins(ops, sol, sectors=sectors)
            floor = min(rep.gap_low, rep.gap_high, *rep.lam_margin.values())
            if floor <= 0.0:
                raise FoldError(float(p), f"non-degeneracy margin {floor:.3e} <= 0")
            margins.append(rep)
        else:
            margins.append(None)
        integral = radial_integral(ops[0].mesh, params.dim, sol.profile)
        sign_data.append((float(sol.profile.values[0]), integral))
        profiles.append(sol.profile.values)
        payloads.append(sol)
        if monitor is not None:
            monitor(float(p), sol, margins[-1])
        prev = sol.profile.values
    return ContinuationTrace(
        parameter="p", knots=knots, profiles=profiles,
        payloads=payloads, margins=margins, sign_data=sign_data,
    )


# ---------------------------------------------------------------------------
# asymptotics, uniqueness, homotopy


def small_p_asymptotics(dim: int, s: float, lam: float = 0.0,
                        eps=(0.2, 0.1, 0.05), *, m: int = 192,
                        grading: float = 2.0,
                        cache: OperatorCache | None = None,
                        tol: float = 1e-8, quad: int = 96,
                        rmax: float = 4.0) -> dict:
    """Blow-up scaling rows for p = 2 + eps.

    Each row reports the amplitude ratio ||u||_inf^{p-2} / (lam_1 + lam)
    and the sup distance of u/||u||_inf to the first eigenfunction; both
    should improve monotonically as eps shrinks.
    """
    op = _operator(dim, s, 0, m, grading, cache, quad, rmax)
    lam1, phi1 = first_eigen_lambda1(op)
    rows = []
    for e in eps:
        params = ProblemParams(dim=dim, s=s, p=2.0 + float(e), lam=lam)
        sol = solve_ground_state(op, params, tol=tol)
        ratio = sol.sup_norm ** (params.p - 2.0) / (lam1 + lam)
        dist = float(np.max(np.abs(sol.profile.values / sol.sup_norm - phi1.values)))
        rows.append({
            "eps": float(e), "p": params.p, "sup_norm": sol.sup_norm,
            "ratio": float(ratio), "profile_dist": dist,
            "residual_rel": sol.residual_rel,
        })
    devs = [abs(r["ratio"] - 1.0) for r in rows]
    dists = [r["profile_dist"] for r in rows]
    return {
        "rows": rows,
        "lambda1": lam1,
        "ratio_monotone": all(a >= b for a, b in zip(devs[:-1], devs[1:])),
        "dist_monotone": all(a >= b for a, b in zip(dists[:-1], dists[1:])),
    }


def _seeded_inits(mesh_nodes: np.ndarray, n_starts: int, seed: int) -> list[np.ndarray]:
    """Deterministic family of positive, boundary-vanishing start profiles."""
    rng = np.random.default_rng(seed)
    r = mesh_nodes
    inits = []
    for _ in range(n_starts):
        q = rng.uniform(0.5, 3.0)
        b = rng.uniform(0.0, 0.45)
        k = rng.integers(1, 5)
        vals = (1.0 - r ** 2) ** q * (1.0 + b * np.cos(k * np.pi * r))
        inits.append(vals)
    return inits


def multistart_uniqueness(params: ProblemParams, n_starts: int = 20,
                          seed: int = 0, *, m: int = 192,
                          grading: float = 2.0,
                          cache: OperatorCache | None = None,
                          tol: float = 1e-8, quad: int = 96,
                          rmax: float = 4.0) -> VerificationReport:
    """Solve from seeded random positive inits; demand a single cluster."""
    if n_starts < 2:
        raise ValueError("need at least two starts")
    op = _operator(params.dim, params.s, 0, m, grading, cache, quad, rmax)
    sols = [
        solve_ground_state(op, params, tol=tol, init=init)
        for init in _seeded_inits(op.mesh.nodes, n_starts, seed)
    ]
    values = np.stack([s.profile.values for s in sols])
    energies = np.asarray([s.energy for s in sols])
    linf = 0.0
    for i in range(n_starts):
        diff = np.max(np.abs(values[i + 1:] - values[i]), initial=0.0)
        linf = max(linf, float(diff))
    espread = float(np.ptp(energies) / max(abs(energies).max(), 1e-300))
    checks = [
        CheckResult("cluster-linf", margin=1e-6 - linf, tolerance=0.0,
                    details={"max_pairwise_linf": linf}),
        CheckResult("cluster-energy", margin=1e-10 - espread, tolerance=0.0,
                    details={"relative_energy_spread": espread}),
    ]
    return VerificationReport(
        checks=checks,
        params=_params_dict(params),
        mesh=_mesh_descriptor(op),
        provenance={
            "seed": int(seed), "n_starts": int(n_starts),
            "cache_key": cache_key(op.mesh, op.spec),
            "energies": [float(e) for e in energies],
        },
    )


def tau_homotopy_sign_counts(op: SectorOperator, sol: GroundStateSolution,
                             taus=(0.0, 0.25, 0.5, 0.75, 1.0),
                             sign_tol: float = 1e-6) -> list[int]:
    """Sign-change count of w_2 along the potential homotopy V_tau = tau*V."""
    mv_full = linearized_potential_mass(op, sol.profile, sol.params.p)
    counts = []
    for tau in taus:
        sig = sigma_spectrum_from_potential(op, float(tau) * mv_full, k=2)
        counts.append(count_sign_changes(_normalized(sig.functions[1]), sign_tol))
    return counts


# ---------------------------------------------------------------------------
# negative controls


def negative_control_third_eigenfunction(params: ProblemParams,
                                         **kwargs) -> VerificationReport:
    """Run the shape battery on w_3; the sign-change check must fail."""
    return check_theorem1(params, eigenfunction_index=3, **kwargs)


def negative_control_shifted_potential(params: ProblemParams,
                                       **kwargs) -> VerificationReport:
    """Shift the linearization potential until the sigma gap fails."""
    base = check_nondegeneracy(params, **kwargs)
    shift = base["sigma-below"].margin + 1.0
    return check_nondegeneracy(params, potential_shift=float(shift), **kwargs)
