"""Linearized spectra: sigma problem, weighted Lambda problem, margins."""

import numpy as np
import pytest
from scipy.linalg import eigh

from mixedlap import (
    ProblemParams,
    lambda_spectrum,
    nondegeneracy_margins,
    sigma_spectrum,
)
from mixedlap.spectral import (
    linearized_potential_mass,
    sigma_spectrum_from_potential,
)


@pytest.fixture(scope="module")
def instance(gs_factory):
    return gs_factory(dim=2, s=0.5, p=3.0, lam=0.0, m=96)


def test_sigma_ordering_and_bracketing(instance):
    op, sol = instance
    sig = sigma_spectrum(op, sol, k=4)
    assert np.all(np.diff(sig.values) > 0.0)
    # non-degeneracy bracket around -lam = 0
    assert sig.values[0] < 0.0 < sig.values[1]
    assert len(sig.functions) == 4


def test_sigma_shift_identity(instance):
    # replacing V by V + c shifts every eigenvalue by exactly c
    op, sol = instance
    mv = linearized_potential_mass(op, sol.profile, sol.params.p)
    base = sigma_spectrum_from_potential(op, mv, k=4)
    c = 3.7
    shifted = sigma_spectrum_from_potential(op, mv + c * op.mass, k=4)
    assert np.allclose(shifted.values, base.values + c, rtol=1e-10, atol=1e-7)


def test_nonpositive_potential_lowers_spectrum(instance):
    op, sol = instance
    zero = np.zeros_like(op.mass)
    free = sigma_spectrum_from_potential(op, zero, k=5)
    mv = linearized_potential_mass(op, sol.profile, sol.params.p)  # V <= 0
    pulled = sigma_spectrum_from_potential(op, mv, k=5)
    assert np.all(pulled.values < free.values)


def test_eigenfunctions_mass_orthogonal(instance):
    op, sol = instance
    sig = sigma_spectrum(op, sol, k=3)
    v1 = op.restrict(sig.functions[0])
    v2 = op.restrict(sig.functions[1])
    n1 = np.sqrt(v1 @ op.mass @ v1)
    n2 = np.sqrt(v2 @ op.mass @ v2)
    assert abs(v1 @ op.mass @ v2) / (n1 * n2) < 1e-8


def test_sigma_gap_stable_under_mesh_doubling(gs_factory):
    gaps = []
    for m in (96, 192):
        op, sol = gs_factory(dim=2, s=0.5, p=3.0, lam=0.0, m=m)
        sig = sigma_spectrum(op, sol, k=2)
        gaps.append(sig.values[1] - sig.values[0])
    assert abs(gaps[1] - gaps[0]) / gaps[1] < 0.2


def test_weighted_problem_has_exact_ground_pair(instance):
    op, sol = instance
    lam = lambda_spectrum(op, sol, k=3)
    j = int(np.argmin(np.abs(lam.values - 1.0)))
    assert abs(lam.values[j] - 1.0) < 1e-3
    u = op.restrict(sol.profile)
    v = op.restrict(lam.functions[j])
    cos = abs(u @ op.mass @ v) / np.sqrt((u @ op.mass @ u) * (v @ op.mass @ v))
    assert cos > 0.999
    # eigen-residual of the pair (1, u) bounded by the solver residual
    lhs = (op.stiffness() + sol.params.lam * op.mass) @ u
    from mixedlap.groundstate import weighted_mass
    rhs = weighted_mass(op, sol.profile.values, sol.params.p - 2.0) @ u
    rel = np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs)
    assert rel <= 10.0 * max(sol.residual, 1e-12)


def test_weighted_margins_exceed_p_minus_one(op_factory, gs_factory):
    _, sol = gs_factory(dim=2, s=0.5, p=3.0, lam=0.0, m=96)
    for ell in (1, 2):
        op_l = op_factory(2, 0.5, sector=ell, m=96)
        lam = lambda_spectrum(op_l, sol, k=1)
        assert lam.values[0] > sol.params.p - 1.0


def test_nondegeneracy_report_consistency(op_factory, gs_factory):
    op0, sol = gs_factory(dim=2, s=0.5, p=3.0, lam=0.0, m=96)
    ops = {0: op0,
           1: op_factory(2, 0.5, sector=1, m=96),
           2: op_factory(2, 0.5, sector=2, m=96)}
    rep = nondegeneracy_margins(ops, sol)
    # the subset eigensolver wobbles ~1e-8 with k, so match k=4 exactly
    sig = sigma_spectrum(op0, sol, k=4)
    assert rep.gap_low == pytest.approx(-sol.params.lam - sig.values[0], rel=1e-10)
    assert rep.gap_high == pytest.approx(sig.values[1] + sol.params.lam, rel=1e-10)
    assert set(rep.lam_min) == {1, 2}
    assert rep.passed
    assert abs(rep.eig0_value - 1.0) < 1e-3
    assert rep.eig0_cosine > 0.999


def test_lambda_shift_moves_bracket(gs_factory):
    # same operator pencil, lam = 1: bracket must hold around -1
    op, sol = gs_factory(dim=2, s=0.5, p=3.0, lam=1.0, m=96)
    sig = sigma_spectrum(op, sol, k=2)
    assert sig.values[0] < -1.0 < sig.values[1]


def test_sigma_matches_direct_dense_solve(instance):
    op, sol = instance
    sig = sigma_spectrum(op, sol, k=3)
    mv = linearized_potential_mass(op, sol.profile, sol.params.p)
    ref = eigh(op.stiffness() + mv, op.mass, eigvals_only=True)[:3]
    # subset vs full LAPACK driver: agreement to solver noise only
    assert np.allclose(sig.values, ref, rtol=1e-8, atol=1e-7)
