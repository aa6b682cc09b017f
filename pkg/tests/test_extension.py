"""Poisson extension: trace limits, harmonicity, Neumann consistency."""

import numpy as np
import pytest
from scipy.linalg import eigh

from mixedlap import KernelSpec, build_mesh
from mixedlap.assemble import QuadratureError, apply_fractional, radial_integral
from mixedlap.extension import (
    ExtrapolationError,
    cs_extend,
    moment_limit,
    neumann_trace,
)
from mixedlap.mesh import RadialFunction

SPEC2 = KernelSpec(dim=2, order=0.5, sector=0, quad_order=96)


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(96, grading=2.0)


@pytest.fixture(scope="module")
def smooth(mesh):
    return RadialFunction(mesh, (1.0 - mesh.nodes**2) ** 2)


def test_extension_restores_data_as_height_shrinks(smooth):
    radii = np.linspace(0.0, 0.95, 40)
    devs = []
    for t in (0.1, 0.05, 0.025):
        samp = cs_extend(smooth, radii, [t], SPEC2)
        devs.append(float(np.max(np.abs(samp.values[:, 0] - smooth(radii)))))
    assert devs[0] > devs[1] > devs[2]
    assert devs[2] < 0.07


def test_extension_obeys_maximum_principle(smooth):
    radii = np.linspace(0.0, 0.95, 30)
    samp = cs_extend(smooth, radii, [0.05, 0.3, 1.0], SPEC2)
    sup = float(np.max(np.abs(smooth.values)))
    # probability kernel: allow only quadrature-level overshoot
    assert float(np.max(np.abs(samp.values))) <= sup * (1.0 + 5e-6)


def test_zero_data_extends_to_zero(mesh):
    zero = RadialFunction(mesh, np.zeros_like(mesh.nodes))
    samp = cs_extend(zero, [0.0, 0.4], [0.1, 1.0], SPEC2)
    assert np.all(samp.values == 0.0)


def test_extension_linear_in_data(mesh, smooth):
    other = RadialFunction(mesh, mesh.nodes * (1.0 - mesh.nodes))
    combo = RadialFunction(mesh, 2.0 * smooth.values - 3.0 * other.values)
    radii = [0.1, 0.5, 0.8]
    heights = [0.07, 0.4]
    a = cs_extend(smooth, radii, heights, SPEC2).values
    b = cs_extend(other, radii, heights, SPEC2).values
    c = cs_extend(combo, radii, heights, SPEC2).values
    assert np.allclose(c, 2.0 * a - 3.0 * b, rtol=1e-12, atol=1e-14)


def test_height_validation(smooth):
    with pytest.raises(ValueError, match="positive"):
        cs_extend(smooth, [0.2], [0.1, -0.5], SPEC2)
    with pytest.raises(QuadratureError, match="1e-4"):
        cs_extend(smooth, [0.2], [5e-5], SPEC2)


def test_sample_csv_round_trip(tmp_path, smooth):
    samp = cs_extend(smooth, [0.0, 0.3, 0.6], [0.05, 0.2], SPEC2)
    path = tmp_path / "ext.csv"
    samp.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "r,t,W"
    assert len(lines) == 1 + 3 * 2
    r, t, w = (float(x) for x in lines[1].split(","))
    assert (r, t) == (0.0, 0.05)
    assert w == samp.values[0, 0]


@pytest.mark.parametrize("dim,s", [(2, 0.3), (2, 0.7), (3, 0.5)])
def test_harmonicity_residual_second_order(smooth, dim, s):
    """div(t^{1-2s} grad W) = 0: the finite-difference residual of

        W_rr + (N-1)/r W_r + W_tt + (1-2s)/t W_t

    at an interior point must shrink at second order in the stencil width.
    """
    spec = KernelSpec(dim=dim, order=s, sector=0, quad_order=96)
    r0, t0 = 0.45, 0.35

    def residual(h):
        rs = np.array([r0 - h, r0, r0 + h])
        ts = np.array([t0 - h, t0, t0 + h])
        S = cs_extend(smooth, rs, ts, spec).values
        w_rr = (S[2, 1] - 2.0 * S[1, 1] + S[0, 1]) / h**2
        w_r = (S[2, 1] - S[0, 1]) / (2.0 * h)
        w_tt = (S[1, 2] - 2.0 * S[1, 1] + S[1, 0]) / h**2
        w_t = (S[1, 2] - S[1, 0]) / (2.0 * h)
        res = w_rr + (dim - 1) / r0 * w_r + w_tt + (1.0 - 2.0 * s) / t0 * w_t
        return res, abs(w_rr) + abs(w_tt)

    res1, scale = residual(0.04)
    res2, _ = residual(0.02)
    assert 3.0 < res1 / res2 < 5.0
    assert abs(res2) < 2e-3 * scale


def test_neumann_trace_constant_on_dyda_profile(mesh):
    # (1-r^2)^s maps to the constant pi/2 for N=2, s=1/2
    prof = RadialFunction(mesh, np.clip(1.0 - mesh.nodes**2, 0.0, None) ** 0.5)
    tr = neumann_trace(prof, SPEC2)
    win = mesh.nodes[:-1] <= 0.7
    dev = np.abs(tr.values[:-1][win] - np.pi / 2) / (np.pi / 2)
    assert float(dev.max()) < 0.05
    assert tr.values[-1] == 0.0


def test_neumann_trace_matches_assembled_operator(op_factory, smooth):
    op = op_factory(2, 0.5, m=96)
    target = apply_fractional(smooth, op)
    tr = neumann_trace(smooth, SPEC2)
    win = op.mesh.nodes[:-1] <= 0.8
    rr = op.mesh.nodes[:-1][win]
    num = tr.values[:-1][win]
    den = target.values[:-1][win]
    l2 = np.sqrt(
        np.trapezoid((num - den) ** 2 * rr, rr) / np.trapezoid(den**2 * rr, rr)
    )
    assert l2 < 0.05


def test_neumann_trace_linear_in_data(mesh, smooth):
    other = RadialFunction(mesh, mesh.nodes**2 * (1.0 - mesh.nodes))
    combo = RadialFunction(mesh, smooth.values + 0.7 * other.values)
    ta = neumann_trace(smooth, SPEC2).values
    tb = neumann_trace(other, SPEC2).values
    tc = neumann_trace(combo, SPEC2).values
    assert np.allclose(tc, ta + 0.7 * tb, rtol=1e-10, atol=1e-10)


def test_neumann_trace_needs_two_heights(smooth):
    with pytest.raises(ValueError, match="two heights"):
        neumann_trace(smooth, SPEC2, t_sequence=(0.05,))


def test_neumann_trace_divergence_raises(mesh):
    prof = RadialFunction(mesh, np.clip(1.0 - mesh.nodes**2, 0.0, None) ** 0.5)
    # heights far outside the trace regime break the t^{2-2s} error model
    with pytest.raises(ExtrapolationError, match="differ"):
        neumann_trace(prof, SPEC2, t_sequence=(1.6, 0.8, 0.4))


@pytest.mark.parametrize("dim,s", [(2, 0.5), (3, 0.3)])
def test_moment_ratio_near_one(smooth, dim, s):
    spec = KernelSpec(dim=dim, order=s, sector=0, quad_order=96)
    ratio = moment_limit(smooth, spec, 50.0)
    assert 0.98 < ratio < 1.02
    # ratio is scale free
    scaled = RadialFunction(smooth.mesh, 17.0 * smooth.values)
    assert moment_limit(scaled, spec, 50.0) == pytest.approx(ratio, rel=1e-12)


def test_moment_limit_validates_height(smooth):
    with pytest.raises(ValueError, match="20"):
        moment_limit(smooth, SPEC2, 19.0)


def test_mean_zero_data_has_vanishing_far_field(mesh, smooth):
    bump = RadialFunction(mesh, np.clip(1.0 - mesh.nodes**2, 0.0, None) ** 3)
    c = radial_integral(mesh, 2, smooth) / radial_integral(mesh, 2, bump)
    balanced = RadialFunction(mesh, smooth.values - c * bump.values)
    assert abs(radial_integral(mesh, 2, balanced)) < 1e-14
    t = 50.0
    w0 = cs_extend(balanced, [0.0], [t], SPEC2).values[0, 0]
    ref = cs_extend(smooth, [0.0], [t], SPEC2).values[0, 0]
    assert abs(t**2 * w0) < 0.01 * abs(t**2 * ref)


def test_second_eigenfunction_center_line_keeps_sign(op_factory):
    """The extension of the sign-changing second eigenfunction stays positive
    on the center line for moderate heights, while the far field carries the
    sign of its integral; the two regimes together force the sign change.
    """
    op = op_factory(2, 0.5, m=96)
    vals, vecs = eigh(op.stiffness(), op.mass)
    w2 = op.extend(vecs[:, 1])
    if w2.values[0] < 0:
        w2 = RadialFunction(op.mesh, -w2.values)
    total = radial_integral(op.mesh, 2, w2)
    assert w2.values[0] * total < 0.0
    heights = np.array([0.025, 0.05, 0.1, 0.2, 0.35, 0.5])
    center = cs_extend(w2, [0.0], heights, SPEC2).values[0]
    assert np.all(center > 0.0)
    far = cs_extend(w2, [0.0], [50.0], SPEC2).values[0, 0]
    assert far * total > 0.0
