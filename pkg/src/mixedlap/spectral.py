"""Linearized spectra around a ground state.

Two eigenproblems certify non-degeneracy and the shape facts:

* sigma problem (radial sector): (K + M_V) w = sigma M w with the
  linearization potential V = -(p-1) u^{p-2}; the ground state is
  non-degenerate in the radial sector iff sigma_1 < -lam < sigma_2.

* weighted problem (any sector l): (K_l + lam M) v = Lam M_w v with
  weight u^{p-2}.  At a converged ground state (Lam, v) = (1, u) is an
  exact discrete eigenpair for l = 0, and non-degeneracy in the sector l
  amounts to Lam_min(l) > p - 1.

Both use dense symmetric-definite solvers; meshes here are a few hundred
nodes, so that is the fast and robust choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .assemble import SectorOperator
from .groundstate import GroundStateSolution, weighted_mass
from .mesh import RadialFunction

__all__ = [
    "SigmaSpectrum",
    "NondegeneracyReport",
    "linearized_potential_mass",
    "sigma_spectrum",
    "sigma_spectrum_from_potential",
    "lambda_spectrum",
    "nondegeneracy_margins",
]


@dataclass
class SigmaSpectrum:
    """Leading eigenvalues (ascending) and eigenfunctions of a radial problem."""

    values: np.ndarray
    functions: list[RadialFunction]


def linearized_potential_mass(op: SectorOperator, profile: RadialFunction,
                              p: float) -> np.ndarray:
    """Mass matrix of the linearization potential V = -(p-1) u^{p-2}."""
    return -(p - 1.0) * weighted_mass(op, profile.values, p - 2.0)


def sigma_spectrum_from_potential(op: SectorOperator, mv: np.ndarray,
                                  k: int = 6) -> SigmaSpectrum:
    """Lowest k eigenpairs of (K + M_V) w = sigma M w."""
    n = op.ndof
    k = min(k, n)
    vals, vecs = eigh(op.stiffness() + mv, op.mass, subset_by_index=[0, k - 1])
    funcs = [op.extend(vecs[:, j]) for j in range(k)]
    return SigmaSpectrum(values=vals, functions=funcs)


def sigma_spectrum(op: SectorOperator, sol: GroundStateSolution,
                   k: int = 6) -> SigmaSpectrum:
    """Spectrum of the linearized operator around the ground state."""
    mv = linearized_potential_mass(op, sol.profile, sol.params.p)
    return sigma_spectrum_from_potential(op, mv, k)


def lambda_spectrum(op: SectorOperator, sol: GroundStateSolution,
                    k: int = 4) -> SigmaSpectrum:
    """Lowest k eigenpairs of (K_l + lam M) v = Lam M_w v, weight u^{p-2}.

    The weight vanishes at the boundary, so on graded meshes M_w is nearly
    singular and must not sit on the Cholesky side of the solver.  We solve
    the flipped pencil M_w v = mu (K_l + lam M) v instead, whose right-hand
    matrix is definite and well conditioned; Lam = 1/mu and the k smallest
    Lam are the k largest mu.
    """
    p, lam = sol.params.p, sol.params.lam
    mw = weighted_mass(op, sol.profile.values, p - 2.0)
    n = op.ndof
    k = min(k, n)
    mu, vecs = eigh(mw, op.stiffness() + lam * op.mass,
                    subset_by_index=[n - k, n - 1])
    vals = (1.0 / mu)[::-1].copy()
    funcs = [op.extend(vecs[:, k - 1 - j]) for j in range(k)]
    return SigmaSpectrum(values=vals, functions=funcs)


@dataclass
class NondegeneracyReport:
    """Margins certifying non-degeneracy of a ground state."""

    sigma: np.ndarray  # radial sigma_1..sigma_k
    gap_low: float  # -lam - sigma_1  (> 0 wanted)
    gap_high: float  # sigma_2 + lam  (> 0 wanted)
    lam_min: dict[int, float]  # sector -> Lam_min
    lam_margin: dict[int, float]  # sector -> Lam_min - (p - 1)
    eig0_value: float  # Lam closest to 1 in the radial weighted problem
    eig0_cosine: float  # alignment of its eigenvector with u

    @property
    def passed(self) -> bool:
        return (
            self.gap_low > 0.0
            and self.gap_high > 0.0
            and all(m > 0.0 for m in self.lam_margin.values())
        )


def nondegeneracy_margins(ops: dict[int, SectorOperator],
                          sol: GroundStateSolution,
                          sectors: tuple[int, ...] = (1, 2)) -> NondegeneracyReport:
    """Assemble all non-degeneracy margins for one ground state.

    `ops` must contain the radial operator under key 0 and one operator per
    requested nonradial sector.
    """
    p, lam = sol.params.p, sol.params.lam
    sig = sigma_spectrum(ops[0], sol, k=4)

    lam_min: dict[int, float] = {}
    lam_margin: dict[int, float] = {}
    for l in sectors:
        spectrum = lambda_spectrum(ops[l], sol, k=1)
        lam_min[l] = float(spectrum.values[0])
        lam_margin[l] = lam_min[l] - (p - 1.0)

    rad = lambda_spectrum(ops[0], sol, k=3)
    j = int(np.argmin(np.abs(rad.values - 1.0)))
    v = ops[0].restrict(rad.functions[j])
    u = sol.coeffs
    m = ops[0].mass
    cos = abs(float(v @ (m @ u))) / float(
        np.sqrt((v @ (m @ v)) * (u @ (m @ u)))
    )
    return NondegeneracyReport(
        sigma=sig.values,
        gap_low=-lam - float(sig.values[0]),
        gap_high=float(sig.values[1]) + lam,
        lam_min=lam_min,
        lam_margin=lam_margin,
        eig0_value=float(rad.values[j]),
        eig0_cosine=cos,
    )
