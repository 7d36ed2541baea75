"""Wigner-type sampling and local-law residuals.

A model's kernel supplies a variance profile ``s_kl = S_{x(k) x(l)} / N``
after inflating the weighted sites to ``N`` uniform ones; a Wigner-type
matrix has independent centered entries with those variances (Gaussian
here).  The resolvent diagonal of a sample tracks the solution of the
corresponding equation down to spectral scales just above the eigenvalue
spacing, with entrywise deviations of order ``(N Im z)^{-1/2}``; the
leftover of the Schur complement identity,

    d_k = -1/G_kk - z + E h_kk - sum_i s_ki G_ii,

measures how far a given sample is from an exact solution, and its
average is quadratically smaller than its size (fluctuation averaging).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .model import ModelSpec
from .solver import GridSolution, Solution

__all__ = [
    "EnsembleSpec",
    "LocalLawReport",
    "site_counts",
    "sample",
    "empirical_vs_qve",
    "locallaw_residuals",
]


@dataclass(frozen=True)
class EnsembleSpec:
    """Wigner-type ensemble over an inflated model.

    ``site_map[k]`` is the model site of matrix index ``k``; the variance
    profile is ``s_kl = S[site_map[k], site_map[l]] / N``.  Weights that
    are not integer multiples of ``1/N`` are rounded by largest remainder,
    which perturbs the profile at relative order ``1/N``.
    """

    N: int
    model: ModelSpec
    symmetry: str = "real"  # 'real' | 'complex'
    seed: int = 0

    def __post_init__(self) -> None:
        if self.symmetry not in ("real", "complex"):
            raise ValidationError("symmetry must be 'real' or 'complex'")
        if self.N < 1:
            raise ValidationError("N must be positive")

    @property
    def site_map(self) -> np.ndarray:
        counts = site_counts(self.model.weights, self.N)
        return np.repeat(np.arange(self.model.n), counts)

    def variance_profile(self) -> np.ndarray:
        idx = self.site_map
        return self.model.S[np.ix_(idx, idx)] / self.N

    def solution_on_sites(self, solution: Solution) -> np.ndarray:
        """Inflate a model solution to the N matrix indices."""
        return solution.m[self.site_map]


def site_counts(weights: np.ndarray, N: int) -> np.ndarray:
    """Largest-remainder apportionment of N indices to weighted sites."""
    raw = np.asarray(weights) * N
    counts = np.floor(raw).astype(int)
    short = N - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts))
        counts[order[:short]] += 1
    if np.any(counts == 0):
        raise ValidationError(
            "N too small: some site receives no matrix index"
        )
    return counts


def sample(spec: EnsembleSpec) -> np.ndarray:
    """Draw one Gaussian Wigner-type matrix, deterministic given the seed.

    Entries are independent up to symmetry with ``E|h_kl|^2`` equal to the
    variance profile; the diagonal mean is ``-a`` at the owning site.
    """
    rng = np.random.default_rng(spec.seed)
    N = spec.N
    s = spec.variance_profile()
    root = np.sqrt(s)
    if spec.symmetry == "real":
        g = rng.standard_normal((N, N))
        H = np.triu(g, 1) * np.triu(root, 1)
        H = H + H.T
        H[np.diag_indices(N)] = np.diag(g) * np.diag(root)
    else:
        g1 = rng.standard_normal((N, N))
        g2 = rng.standard_normal((N, N))
        off = (np.triu(g1, 1) + 1j * np.triu(g2, 1)) / np.sqrt(2.0) * np.triu(
            root, 1
        )
        H = off + off.conj().T
        H = H.astype(complex)
        H[np.diag_indices(N)] = np.diag(g1) * np.diag(root)
    H[np.diag_indices(N)] = H[np.diag_indices(N)] - spec.model.a[spec.site_map]
    return H


def empirical_vs_qve(
    H: np.ndarray, grid: GridSolution, eigenvalues: Optional[np.ndarray] = None
) -> float:
    """Kolmogorov distance between the sample spectrum and the solved density.

    The solved density is integrated by the trapezoid rule along the grid
    and compared with the empirical spectral distribution at the jump
    points (the usual one-sample statistic).
    """
    lam = np.sort(
        eigenvalues if eigenvalues is not None else np.linalg.eigvalsh(H)
    )
    taus = grid.tau_grid
    dens = np.nan_to_num(grid.avg_density, nan=0.0)
    cdf_grid = np.concatenate(
        [[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(taus))]
    )
    F = np.interp(lam, taus, cdf_grid, left=0.0, right=cdf_grid[-1])
    n = lam.size
    lo = np.arange(0, n) / n
    hi = np.arange(1, n + 1) / n
    return float(np.max(np.maximum(np.abs(F - lo), np.abs(F - hi))))


@dataclass
class LocalLawReport:
    z: complex
    max_diag_dev: float
    max_offdiag: float
    avg_dev: float
    predicted_scale: float  # 1/sqrt(N Im z)
    d_norm: float           # sup norm of the Schur leftover
    d_avg: float            # |mean(d)|
    resolvent_residual: float
    seed: Optional[int] = None


def locallaw_residuals(
    H: np.ndarray,
    spec: EnsembleSpec,
    solution: Solution,
) -> LocalLawReport:
    """Resolvent deviations of a sample against the solved ``m(z)``.

    ``G`` is formed by one dense solve; the report carries the entrywise
    and averaged deviations with the predicted ``(N Im z)^{-1/2}`` scale,
    plus the sup norm and average of the Schur leftover ``d``.
    """
    z = solution.z
    if z.imag <= 0:
        raise ValidationError("local law needs Im z > 0")
    N = spec.N
    if H.shape != (N, N):
        raise ValidationError("sample dimension disagrees with the ensemble")
    m_sites = spec.solution_on_sites(solution)
    A = H.astype(complex) - z * np.eye(N)
    G = scipy.linalg.solve(A, np.eye(N, dtype=complex), assume_a="sym")
    resolvent_residual = float(np.max(np.abs(A @ G - np.eye(N))))
    diag = np.diag(G)
    offdiag = G - np.diag(diag)
    s = spec.variance_profile()
    a_sites = spec.model.a[spec.site_map]
    d = -1.0 / diag - z - a_sites - s @ diag
    return LocalLawReport(
        z=z,
        max_diag_dev=float(np.max(np.abs(diag - m_sites))),
        max_offdiag=float(np.max(np.abs(offdiag))),
        avg_dev=float(np.abs(np.mean(diag) - np.mean(m_sites))),
        predicted_scale=float(1.0 / np.sqrt(N * z.imag)),
        d_norm=float(np.max(np.abs(d))),
        d_avg=float(np.abs(np.mean(d))),
        resolvent_residual=resolvent_residual,
        seed=spec.seed,
    )
