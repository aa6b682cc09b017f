"""Importance-sampled Monte-Carlo oracle for the full-space Gagliardo integral.

G(u) = iint_{R^N x R^N} (u(x) - u(y))^2 / |x-y|^{N+2s} dx dy for u supported
in the unit ball.  Written only against radial profiles u(|x|).

Sampling: x uniform in the ball; z = y - x with uniform direction and radius
rho drawn from the mixture density g(rho) ~ rho^{1-2s} on (0,1] and
rho^{-1-2s} on (1,inf) (each branch by inverse CDF).  The importance weight
collapses to rho^{-2} on the inner branch and 1 on the outer one; pairs with
both points outside contribute zero, pairs across the boundary are counted
twice via the (1 + 1_{y outside}) factor.
"""

import numpy as np

from mixedlap import surface_area


def gagliardo_mc(profile, dim, s, n_samples, seed, chunk=500_000):
    rng = np.random.default_rng(seed)
    w_in = 1.0 / (2.0 - 2.0 * s)
    w_out = 1.0 / (2.0 * s)
    z_norm = w_in + w_out
    ball_vol = surface_area(dim) / dim
    total = 0.0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        dir_x = rng.standard_normal((n, dim))
        dir_x /= np.linalg.norm(dir_x, axis=1, keepdims=True)
        x = dir_x * rng.random(n)[:, None] ** (1.0 / dim)

        inner = rng.random(n) < w_in / z_norm
        v = rng.random(n)
        rho = np.where(inner, v ** (1.0 / (2.0 - 2.0 * s)),
                       np.maximum(v, 1e-300) ** (-1.0 / (2.0 * s)))
        dir_z = rng.standard_normal((n, dim))
        dir_z /= np.linalg.norm(dir_z, axis=1, keepdims=True)
        y = x + dir_z * rho[:, None]

        rx = np.linalg.norm(x, axis=1)
        ry = np.linalg.norm(y, axis=1)
        du = profile(rx) - np.where(ry < 1.0, profile(ry), 0.0)
        est = du * du * np.where(inner, rho ** -2.0, 1.0) * (1.0 + (ry >= 1.0))
        total += float(np.sum(est))
        done += n
    return ball_vol * surface_area(dim) * z_norm * total / n_samples


def fractional_at_origin_mc(profile, dim, s, n_samples, seed):
    """(-Lap)^s u(0) = C(N,s) int (u(0) - u(y)) |y|^{-N-2s} dy, same sampler.

    profile must be smooth at 0: a piecewise-linear interpolant has a cone
    tip there, whose fractional Laplacian at the tip diverges for s >= 1/2.
    """
    from mixedlap import normalization_cns

    rng = np.random.default_rng(seed)
    w_in = 1.0 / (2.0 - 2.0 * s)
    w_out = 1.0 / (2.0 * s)
    z_norm = w_in + w_out
    inner = rng.random(n_samples) < w_in / z_norm
    v = rng.random(n_samples)
    rho = np.where(inner, v ** (1.0 / (2.0 - 2.0 * s)),
                   np.maximum(v, 1e-300) ** (-1.0 / (2.0 * s)))
    du = profile(np.zeros(1))[0] - np.where(rho < 1.0, profile(rho), 0.0)
    est = du * np.where(inner, rho ** -2.0, 1.0)
    return (normalization_cns(dim, s) * surface_area(dim) * z_norm
            * float(np.mean(est)))
