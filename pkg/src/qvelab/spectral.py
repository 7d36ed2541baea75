"""Spectral diagnostics of a QVE solution.

From a solution ``m(z)`` two operators drive everything here:

* the saturated operator ``F`` with kernel ``|m_x| S_xy |m_y|`` (symmetric,
  positivity preserving); its top eigenpair ``(lambda, f)`` obeys the exact
  identity ``lambda = 1 - (Im z / alpha) <f |m|>``;
* the stability operator ``B = exp(-2i arg m) - F`` whose smallest-modulus
  eigenpair ``(beta, b)`` is the direction in which the linearized equation
  loses invertibility.

All operators act on L2 of the model's weights.  They are conjugated by
``diag(sqrt(weights))`` into orthonormal coordinates, where the kernel of F
becomes a plain symmetric matrix and standard dense eigensolvers apply; in
these coordinates the weighted bilinear pairing ``sum_x pi_x u_x w_x`` is
the plain (conjugation-free) dot product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateTop,
    GapTooSmall,
    NotIsolated,
    SingularB,
    ValidationError,
)
from .model import ModelSpec
from .solver import Solution

__all__ = [
    "SpectralData",
    "SpectralOperators",
    "build_F",
    "top_eigenpair",
    "verify_F_identity",
    "build_B",
    "smallest_eigenpair_B",
    "sigma_psi",
    "cubic_coefficients",
    "binv_norms",
    "spectral_operators",
    "spectral_data",
    "spectral_to_json_dict",
]

ISOLATION_TOL = 1e-10
DEGENERATE_TOL = 1e-13


@dataclass
class SpectralData:
    """Per-z spectral package."""

    z: complex
    lam: float               # ||F||_{L2->L2}
    f: np.ndarray            # nonnegative top eigenvector, <f,f> = 1
    gap: float               # lam - max modulus of the rest of Spec(F)
    alpha: float             # <f, v/|m|>
    beta: complex            # smallest-modulus eigenvalue of B
    b: np.ndarray            # its eigenvector, <f, b> = 1
    p: np.ndarray            # sign(Re m), with sign(0) := +1
    sigma: float             # <p f^3>
    psi: float               # quadratic form value D(p f^2) >= 0
    mu: tuple[complex, complex, complex]           # exact cubic coefficients
    mu_expanded: tuple[complex, complex, complex]  # small-alpha expansion
    binv_norm_bb: float
    binv_norm_l2: float


@dataclass
class SpectralOperators:
    """Internal bundle of the matrices behind a :class:`SpectralData`.

    ``F_tilde`` and ``B_tilde`` are the orthonormal-coordinate matrices.
    ``u`` is the unimodular function ``exp(-i arg m)``.
    """

    model: ModelSpec
    z: complex
    m: np.ndarray
    abs_m: np.ndarray
    u: np.ndarray
    F_tilde: np.ndarray
    lam: float
    gap: float
    f: np.ndarray
    f_tilde: np.ndarray
    B_tilde: np.ndarray
    beta: Optional[complex] = None
    b: Optional[np.ndarray] = None
    b_tilde: Optional[np.ndarray] = None

    def apply_F(self, w: np.ndarray) -> np.ndarray:
        """Weighted action of F on a function-coordinates vector."""
        return self.abs_m * self.model.apply_S(self.abs_m * w)

    def deflation_shift(self) -> complex:
        """Shift ``c`` for the deflated solve ``(B + c P) x = Q g``.

        The bad eigenvalue moves from ``beta`` to ``3``, outside the
        spectral disk ``|.| <= 2`` of B, so the system is never singular
        regardless of where ``beta`` sits.
        """
        if self.beta is None:
            raise ValidationError("bad-direction eigenpair not extracted")
        return 3.0 - self.beta

    def binv_q(self, g: np.ndarray) -> np.ndarray:
        """Apply ``B^{-1} Q`` to a function-coordinates vector.

        Computed through the deflated system ``(B + c P) x = Q g`` which
        stays well conditioned even when ``beta`` is close to zero; P is
        the (oblique) spectral projector onto span(b).
        """
        if self.b_tilde is None:
            raise ValidationError("bad-direction eigenpair not extracted")
        sq = self.model.sqrt_weights
        g_t = sq * g
        bt = self.b_tilde
        denom = bt @ bt
        proj = np.outer(bt, bt) / denom
        qg = g_t - proj @ g_t
        x_t = np.linalg.solve(self.B_tilde + self.deflation_shift() * proj, qg)
        return x_t / sq

    def q_apply(self, w: np.ndarray) -> np.ndarray:
        """Apply the spectral projector complement Q = 1 - P (function coords)."""
        if self.b_tilde is None:
            raise ValidationError("bad-direction eigenpair not extracted")
        sq = self.model.sqrt_weights
        w_t = sq * w
        bt = self.b_tilde
        w_t = w_t - bt * ((bt @ w_t) / (bt @ bt))
        return w_t / sq


def build_F(solution: Solution, model: ModelSpec) -> np.ndarray:
    """Saturated operator in orthonormal coordinates (symmetric matrix)."""
    abs_m = np.abs(solution.m)
    d = model.sqrt_weights * abs_m
    return d[:, None] * model.S * d[None, :]


def top_eigenpair(F_tilde: np.ndarray, model: ModelSpec) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and Perron eigenvector of the saturated operator.

    ``f`` is returned in function coordinates, entrywise nonnegative with
    unit weighted two-norm; the sign is fixed by ``<e, f> > 0``.  Raises
    :class:`DegenerateTop` when the top modulus gap falls below 1e-13,
    which flags a uniform-primitivity violation (decoupled blocks).
    """
    vals, vecs = np.linalg.eigh(F_tilde)
    lam = float(vals[-1])
    gap = lam - float(np.max(np.abs(vals[:-1]))) if len(vals) > 1 else lam
    if len(vals) > 1 and gap < DEGENERATE_TOL:
        raise DegenerateTop(f"top eigenvalue gap {gap:.3e} below {DEGENERATE_TOL}")
    f_tilde = vecs[:, -1]
    if np.sum(f_tilde * model.sqrt_weights) < 0:
        f_tilde = -f_tilde
    f = f_tilde / model.sqrt_weights
    return lam, f


def _gap_of(F_tilde: np.ndarray) -> float:
    vals = np.linalg.eigvalsh(F_tilde)
    if len(vals) == 1:
        return float(vals[-1])
    return float(vals[-1] - np.max(np.abs(vals[:-1])))


def alpha_of(solution: Solution, model: ModelSpec, f: np.ndarray) -> float:
    """Projection ``<f, v/|m|>`` of the rescaled density onto ``f``."""
    return float(np.real(model.inner(f, solution.v / np.abs(solution.m))))


def verify_F_identity(
    lam: float, f: np.ndarray, solution: Solution, model: ModelSpec
) -> float:
    """Residual of the exact norm identity for the saturated operator.

    ``| lam - (1 - (Im z / alpha) <f |m|>) |``; an exact identity of the
    model, so the residual is solver plus eigensolver error only.
    """
    z = solution.z
    if z.imag <= 0:
        raise ValidationError("identity requires Im z > 0")
    alpha = alpha_of(solution, model, f)
    fm = float(np.real(model.inner(f, np.abs(solution.m))))
    return abs(lam - (1.0 - z.imag / alpha * fm))


def build_B(solution: Solution, F_tilde: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Stability operator ``exp(-2i arg m) - F`` in orthonormal coordinates."""
    u = np.conj(solution.m) / np.abs(solution.m)
    return np.diag(u**2) - F_tilde


def smallest_eigenpair_B(
    B_tilde: np.ndarray, f: np.ndarray, model: ModelSpec
) -> tuple[complex, np.ndarray]:
    """Smallest-modulus eigenvalue of B and its eigenvector, ``<f, b> = 1``.

    Raises :class:`NotIsolated` when the next eigenvalue modulus is within
    1e-10.  The ``<f, b> = 1`` normalization is a small-density-regime
    property; outside that regime (where ``b`` may be orthogonal to ``f``)
    the eigenvector falls back to unit weighted two-norm with nonnegative
    real average.
    """
    vals, vecs = scipy.linalg.eig(B_tilde)
    order = np.argsort(np.abs(vals))
    beta = complex(vals[order[0]])
    if len(vals) > 1:
        if float(np.abs(vals[order[1]]) - np.abs(beta)) < ISOLATION_TOL:
            raise NotIsolated(
                "smallest-modulus eigenvalue of B is not isolated"
            )
    b_tilde = vecs[:, order[0]]
    f_tilde = model.sqrt_weights * f
    c = f_tilde @ b_tilde
    if abs(c) > 1e-8 * float(np.linalg.norm(b_tilde)):
        b_tilde = b_tilde / c
    else:
        b_tilde = b_tilde / np.linalg.norm(b_tilde)
        s = np.sum(b_tilde * model.sqrt_weights)
        if abs(s) > 1e-12 and (s / abs(s)).real < 0:
            b_tilde = -b_tilde
    return beta, b_tilde / model.sqrt_weights


def sigma_psi(
    lam: float,
    gap: float,
    f: np.ndarray,
    F_tilde: np.ndarray,
    solution: Solution,
    model: ModelSpec,
) -> tuple[float, float]:
    """Cubic symmetry coefficient ``sigma = <p f^3>`` and ``psi = D(p f^2)``.

    ``p = sign(Re m)`` with ``sign(0) := +1``.  The quadratic form D solves
    ``(1 - F) x = Q0 w`` on the orthogonal complement of ``f`` (rank-one
    deflated system) and returns
    ``<Q0 w, (1 + lam) x - Q0 w> >= (gap/2) ||Q0 w||^2 >= 0``.
    """
    if gap < 1e-12:
        raise GapTooSmall(f"spectral gap {gap:.3e} too small for deflated solve")
    p = np.where(np.real(solution.m) >= 0, 1.0, -1.0)
    sigma = float(np.real(model.avg(p * f**3)))
    w = p * f**2
    sq = model.sqrt_weights
    f_t = sq * f
    w_t = sq * w
    y = w_t - f_t * (f_t @ w_t)
    n = model.n
    x = np.linalg.solve(np.eye(n) - F_tilde + np.outer(f_t, f_t), y)
    psi = float(np.real(y @ ((1.0 + lam) * x - y)))
    return sigma, psi


def cubic_coefficients(
    ops: SpectralOperators,
) -> tuple[
    tuple[complex, complex, complex], tuple[complex, complex, complex]
]:
    """Exact and small-alpha-expanded cubic coefficients (mu1, mu2, mu3).

    Exact forms come from projecting the quadratic equation for the
    perturbation onto the bad direction:

        mu1 = -beta <b^2>
        mu2 = <(u^3 - beta u) b^3>,             u = exp(-i arg m)
        mu3 = <b^2 u (u^2 + F - beta) B^{-1}Q [b^2 u (u^2 - beta)]>

    The expanded triple substitutes the eta/alpha expansions of beta and b;
    their error orders are alpha^3 + eta, alpha^2 + eta and alpha for
    mu1, mu2 and mu3 respectively.
    """
    if ops.beta is None or ops.b is None:
        raise ValidationError("bad-direction eigenpair not extracted")
    model = ops.model
    beta, b, u = ops.beta, ops.b, ops.u
    avg = model.avg
    b2 = avg(b * b)
    mu1 = -beta * b2
    mu2 = avg((u**3 - beta * u) * b**3)
    g = b**2 * u * (u**2 - beta)
    w = ops.binv_q(g)
    h = u**2 * w + ops.apply_F(w) - beta * w
    mu3 = avg(b**2 * u * h)

    lam, f = ops.lam, ops.f
    v = np.imag(ops.m)
    alpha = float(np.real(model.inner(f, v / ops.abs_m)))
    eta = ops.z.imag
    fm = float(np.real(model.inner(f, ops.abs_m)))
    sigma, psi = sigma_psi(lam, ops.gap, f, ops.F_tilde, _as_solution(ops), model)
    lead = 1.0 - fm * eta / alpha
    mu1_e = -fm * eta / alpha + 2j * sigma * alpha - 2.0 * (psi - sigma**2) * alpha**2
    mu2_e = lead * sigma + 1j * (3.0 * psi - sigma**2) * alpha
    mu3_e = lead * psi
    return (
        (complex(mu1), complex(mu2), complex(mu3)),
        (complex(mu1_e), complex(mu2_e), complex(mu3_e)),
    )


def _as_solution(ops: SpectralOperators) -> Solution:
    return Solution(z=ops.z, m=ops.m, residual=0.0, iterations=0)


def binv_norms(
    B_tilde: np.ndarray, solution: Solution, model: ModelSpec
) -> tuple[float, float]:
    """Operator norms of ``B^{-1}``: (sup-norm, weighted L2).

    The L2 norm is ``1/s_min(B)`` by SVD in orthonormal coordinates; the
    sup-norm is the maximum absolute row sum of the explicit inverse of
    the action matrix.  Raises :class:`SingularB` when B is singular to
    working precision.
    """
    svals = scipy.linalg.svdvals(B_tilde)
    smin, smax = float(svals[-1]), float(svals[0])
    if smin <= 1e-14 * max(1.0, smax):
        raise SingularB(f"smallest singular value {smin:.3e}")
    l2 = 1.0 / smin
    abs_m = np.abs(solution.m)
    u2 = (np.conj(solution.m) / abs_m) ** 2
    action = np.diag(u2) - abs_m[:, None] * model.S * (model.weights * abs_m)[None, :]
    try:
        inv = np.linalg.inv(action)
    except np.linalg.LinAlgError as exc:
        raise SingularB(str(exc)) from exc
    bb = float(np.max(np.sum(np.abs(inv), axis=1)))
    return bb, l2


def spectral_operators(model: ModelSpec, solution: Solution) -> SpectralOperators:
    """Assemble the operator bundle, including the bad-direction eigenpair."""
    F_tilde = build_F(solution, model)
    lam, f = top_eigenpair(F_tilde, model)
    gap = _gap_of(F_tilde)
    abs_m = np.abs(solution.m)
    u = np.conj(solution.m) / abs_m
    B_tilde = build_B(solution, F_tilde, model)
    ops = SpectralOperators(
        model=model,
        z=solution.z,
        m=solution.m,
        abs_m=abs_m,
        u=u,
        F_tilde=F_tilde,
        lam=lam,
        gap=gap,
        f=f,
        f_tilde=model.sqrt_weights * f,
        B_tilde=B_tilde,
    )
    beta, b = smallest_eigenpair_B(B_tilde, f, model)
    ops.beta = beta
    ops.b = b
    ops.b_tilde = model.sqrt_weights * b
    return ops


def spectral_data(model: ModelSpec, solution: Solution) -> SpectralData:
    """One-shot spectral package at a solved point."""
    ops = spectral_operators(model, solution)
    v = np.imag(solution.m)
    alpha = float(np.real(model.inner(ops.f, v / ops.abs_m)))
    p = np.where(np.real(solution.m) >= 0, 1.0, -1.0)
    sigma, psi = sigma_psi(ops.lam, ops.gap, ops.f, ops.F_tilde, solution, model)
    mu, mu_expanded = cubic_coefficients(ops)
    bb, l2 = binv_norms(ops.B_tilde, solution, model)
    return SpectralData(
        z=solution.z,
        lam=ops.lam,
        f=ops.f,
        gap=ops.gap,
        alpha=alpha,
        beta=ops.beta,
        b=ops.b,
        p=p,
        sigma=sigma,
        psi=psi,
        mu=mu,
        mu_expanded=mu_expanded,
        binv_norm_bb=bb,
        binv_norm_l2=l2,
    )


def spectral_to_json_dict(sd: SpectralData) -> dict:
    """JSON-ready dict with all SpectralData fields."""
    return {
        "z": [sd.z.real, sd.z.imag],
        "lambda": sd.lam,
        "f": [float(x) for x in sd.f],
        "gap": sd.gap,
        "alpha": sd.alpha,
        "beta": [sd.beta.real, sd.beta.imag],
        "b_re": [float(x) for x in np.real(sd.b)],
        "b_im": [float(x) for x in np.imag(sd.b)],
        "p": [float(x) for x in sd.p],
        "sigma": sd.sigma,
        "psi": sd.psi,
        "mu_exact": [[c.real, c.imag] for c in sd.mu],
        "mu_expanded": [[c.real, c.imag] for c in sd.mu_expanded],
        "binv_norm_bb": sd.binv_norm_bb,
        "binv_norm_l2": sd.binv_norm_l2,
    }
