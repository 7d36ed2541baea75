"""Perturbed equation ``-1/g = z + a + Sg + d`` and its control parameters.

The difference ``u = (g - m)/|m|`` splits into a scalar coefficient Theta
along the bad direction ``b`` plus a remainder ``r = Qu`` that the
deflated inverse of the stability operator controls.  Theta satisfies a
cubic whose coefficients come from the spectral module, and the final
perturbation bounds are expressed through four parameters: the distance
to the support, the density at Re z, the weighted size ``delta(z, d)`` of
the perturbation, and ``Upsilon = min(delta/rho^2, delta/varpi^(2/3),
delta^(1/3))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    Diverged,
    NotSmallAlpha,
    PerturbationTooLarge,
    SingularJacobian,
    ValidationError,
)
from .model import ModelSpec, sigma_bound
from .shape import SupportProfile
from .solver import Solution, SolverConfig, solve_point
from .spectral import SpectralOperators, spectral_operators

__all__ = [
    "PerturbationResult",
    "StabilityParams",
    "perturbation_gate",
    "solve_perturbed",
    "apply_R",
    "cubic_check",
    "t_vectors",
    "stability_params",
    "holder_check",
]


@dataclass
class PerturbationResult:
    z: complex
    d: np.ndarray
    g: np.ndarray
    theta: complex
    r_norm: float
    cubic_residual: float
    bound_ratios: dict = field(default_factory=dict)
    m: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None


@dataclass
class StabilityParams:
    varpi: float    # dist(z, supp v)
    rho: float      # <v(Re z)>
    delta: float    # ||d||^2 + |<t1, d>| + |<t2, d>|
    upsilon: float


def perturbation_gate(model: ModelSpec, phi: float, psi_norm: float) -> float:
    """Smallness gate for ``d`` from the measured sup-norm of ``m`` and of
    ``B^{-1}``: within this radius the perturbed equation has a unique
    solution near ``m`` depending analytically on ``d``."""
    sigma = sigma_bound(model)
    psi_norm = max(1.0, psi_norm)
    eps = 1.0 / (3.0 * sigma + 9.0 * model.norm_S_bb() * phi * psi_norm)
    return eps / (8.0 * phi**2 * psi_norm)


def _newton_perturbed(
    model: ModelSpec,
    z: complex,
    d: np.ndarray,
    init: np.ndarray,
    tol: float,
    max_newton: int = 80,
) -> np.ndarray:
    """Newton on ``g + 1/(z + a + Sg + d) = 0`` starting from ``init``."""
    g = init.astype(complex).copy()
    s_action = model.s_action_matrix()
    eye = np.eye(model.n)

    def residual(gv: np.ndarray) -> tuple[float, np.ndarray]:
        phi = -1.0 / (z + model.a + d + model.apply_S(gv))
        return float(np.max(np.abs(gv - phi))), phi

    res, phi = residual(g)
    for _ in range(max_newton):
        if res <= tol:
            return g
        jac = eye - (phi**2)[:, None] * s_action
        try:
            step = np.linalg.solve(jac, phi - g)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        scale = 1.0
        for _ in range(40):
            cand = g + scale * step
            cand_res, cand_phi = residual(cand)
            if cand_res < res:
                g, res, phi = cand, cand_res, cand_phi
                break
            scale *= 0.5
        else:
            raise Diverged(f"perturbed Newton stalled at residual {res:.3e}")
    if res <= tol:
        return g
    raise Diverged(f"perturbed Newton did not reach tolerance ({res:.3e})")


def apply_R(ops: SpectralOperators, w: np.ndarray) -> np.ndarray:
    """The operator ``R = B^{-1} Q (|m| . )`` behind the remainder term."""
    return ops.binv_q(ops.abs_m * w)


def solve_perturbed(
    model: ModelSpec,
    z: complex,
    d: np.ndarray,
    ops: Optional[SpectralOperators] = None,
    config: Optional[SolverConfig] = None,
    enforce_gate: bool = True,
) -> PerturbationResult:
    """Solve the perturbed equation near ``m(z)`` and decompose the shift.

    The unperturbed solve supplies both the Newton starting point and the
    spectral data for the decomposition ``u = Theta b + r``. Raises
    :class:`PerturbationTooLarge` when ``||d||`` exceeds the analyticity
    gate (disable with ``enforce_gate=False`` for exploratory sweeps).
    """
    cfg = config or SolverConfig()
    d = np.asarray(d, dtype=complex)
    if d.shape != (model.n,):
        raise ValidationError("perturbation must match the model dimension")
    if ops is None:
        base = solve_point(model, z, cfg)
        ops = spectral_operators(model, base)
    m = ops.m
    if enforce_gate:
        phi_meas = float(np.max(np.abs(m)))
        from .spectral import binv_norms

        bb, _ = binv_norms(ops.B_tilde, Solution(z, m, 0.0, 0), model)
        gate = perturbation_gate(model, phi_meas, bb)
        if float(np.max(np.abs(d))) > gate:
            raise PerturbationTooLarge(
                f"||d|| = {np.max(np.abs(d)):.3e} exceeds gate {gate:.3e}"
            )
    g = _newton_perturbed(model, z, d, m, cfg.tol)
    u = (g - m) / ops.abs_m
    bt, sq = ops.b_tilde, model.sqrt_weights
    theta = complex((bt @ (sq * u)) / (bt @ bt))
    r = u - theta * ops.b
    d_pair = complex(np.sum(model.weights * ops.abs_m * ops.b * d))
    mu, _ = _cubic_mu(ops)
    cubic_res = abs(mu[2] * theta**3 + mu[1] * theta**2 + mu[0] * theta + d_pair)
    gm = float(np.max(np.abs(g - m)))
    dn = float(np.max(np.abs(d)))
    v_avg = float(np.real(model.avg(np.imag(m))))
    ratios = {"linear": gm / dn if dn else 0.0}
    if v_avg > 0 and dn:
        ratios["rough_sup"] = gm / (dn / v_avg**2)
    return PerturbationResult(
        z=z,
        d=d,
        g=g,
        theta=theta,
        r_norm=float(np.max(np.abs(r))),
        cubic_residual=cubic_res,
        bound_ratios=ratios,
        m=m,
        r=r,
    )


def _cubic_mu(ops: SpectralOperators):
    from .spectral import cubic_coefficients

    return cubic_coefficients(ops)


def cubic_check(
    result: PerturbationResult,
    ops: SpectralOperators,
    c: float = 100.0,
    eps_star: float = 0.15,
) -> tuple[float, float, bool]:
    """Residual of the Theta-cubic against its admissible remainder.

    PASS when ``residual <= c (|Theta|^4 + ||d||^2 + |Theta| ||d||)``.
    Only meaningful in the small-density regime; raises
    :class:`NotSmallAlpha` when ``<v>`` exceeds ``eps_star``.
    """
    model = ops.model
    v_avg = float(np.real(model.avg(np.imag(ops.m))))
    if v_avg > eps_star:
        raise NotSmallAlpha(f"<v> = {v_avg:.3f} exceeds eps_star = {eps_star}")
    dn = float(np.max(np.abs(result.d)))
    th = abs(result.theta)
    bound = c * (th**4 + dn**2 + th * dn)
    return result.cubic_residual, bound, result.cubic_residual <= bound


def t_vectors(ops: SpectralOperators) -> tuple[np.ndarray, np.ndarray]:
    """The two averaging vectors in the refined perturbation size.

    ``t1 = |m| conj(b)``.  ``t2`` represents the functional
    ``w -> 2 <b A(b, Rw)> + <b^2 |m| exp(-i arg m) w>`` where
    ``A(h, w) = exp(-i arg m) (h Fw + (Fh) w)/2`` is the bilinear term of
    the expanded equation and ``R = B^{-1}Q(|m| .)``; it is assembled by
    transposing the matrix of R against the weighted bilinear pairing.
    """
    if ops.b is None or ops.b_tilde is None:
        raise ValidationError("bad-direction eigenpair not extracted")
    model = ops.model
    b, u, abs_m = ops.b, ops.u, ops.abs_m
    t1 = abs_m * np.conj(b)
    n = model.n
    sq = model.sqrt_weights
    bt = ops.b_tilde
    proj = np.outer(bt, bt) / (bt @ bt)
    M = np.linalg.solve(
        ops.B_tilde + ops.deflation_shift() * proj, np.eye(n) - proj
    )
    # R on function coordinates: R = D^-1 M D diag(|m|)
    A_R = (M / sq[:, None]) * (sq * abs_m)[None, :]
    c1 = u * b**2
    c2 = u * b * ops.apply_F(b)
    q = ops.apply_F(c1) + c2
    ell1 = (A_R.T @ (model.weights * q)) / model.weights
    ell2 = b**2 * abs_m * u
    t2 = np.conj(ell1 + ell2)
    return t1, t2


def stability_params(
    model: ModelSpec,
    profile: SupportProfile,
    z: complex,
    d: np.ndarray,
    ops: SpectralOperators,
    config: Optional[SolverConfig] = None,
) -> StabilityParams:
    """Control parameters ``(varpi, rho, delta, Upsilon)`` at ``(z, d)``.

    ``Upsilon`` omits any branch whose denominator vanishes.
    """
    cfg = config or SolverConfig()
    d = np.asarray(d, dtype=complex)
    varpi = min(
        (_dist_to_interval(z, a, b) for a, b in profile.intervals),
        default=float("inf"),
    )
    rho_sol = solve_point(model, complex(z.real, cfg.eta_floor), cfg)
    rho = float(np.real(model.avg(np.imag(rho_sol.m))))
    t1, t2 = t_vectors(ops)
    pair1 = abs(complex(model.inner(t1, d)))
    pair2 = abs(complex(model.inner(t2, d)))
    dn = float(np.max(np.abs(d)))
    delta = dn**2 + pair1 + pair2
    branches = [delta ** (1.0 / 3.0)]
    if rho > 0:
        branches.append(delta / rho**2)
    if varpi > 0 and np.isfinite(varpi):
        branches.append(delta / varpi ** (2.0 / 3.0))
    return StabilityParams(
        varpi=float(varpi), rho=rho, delta=delta, upsilon=float(min(branches))
    )


def _dist_to_interval(z: complex, a: float, b: float) -> float:
    if a <= z.real <= b:
        return abs(z.imag)
    return float(np.hypot(min(abs(z.real - a), abs(z.real - b)), z.imag))


def holder_check(grid) -> dict:
    """One-third-Hoelder difference quotients along a solved grid.

    Returns the worst ratio ``||m(t2) - m(t1)|| / |t2 - t1|^(1/3)`` over
    adjacent grid pairs, its location, and the full profile; refining the
    grid leaves the worst ratio stable where the exponent is saturated
    (cusps) and shrinks it elsewhere.
    """
    taus = grid.tau_grid
    ratios = np.full(taus.size - 1, np.nan)
    for k in range(taus.size - 1):
        if grid.failed[k] or grid.failed[k + 1]:
            continue
        dm = float(
            np.max(np.abs(grid.solutions[k + 1].m - grid.solutions[k].m))
        )
        ratios[k] = dm / abs(taus[k + 1] - taus[k]) ** (1.0 / 3.0)
    k_worst = int(np.nanargmax(ratios))
    return {
        "worst_ratio": float(ratios[k_worst]),
        "tau_at_worst": float(0.5 * (taus[k_worst] + taus[k_worst + 1])),
        "ratios": ratios,
    }
