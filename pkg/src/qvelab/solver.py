"""Solvers for ``-1/m = z + a + Sm`` on the upper half-plane.

The map ``m -> -1/(z + a + Sm)`` is a contraction for ``Im z`` bounded
away from zero, so plain fixed-point iteration settles the top of the
half-plane.  Near the real axis we continue geometrically in ``eta``
(warm-started Newton on ``1 - m^2 S``), which 1/3-Hoelder continuity in
``z`` keeps inside the Newton basin.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import Diverged, MaxIterExceeded, SingularJacobian, ValidationError
from .model import ModelSpec, sigma_bound

__all__ = [
    "Solution",
    "SolverConfig",
    "GridSolution",
    "qve_residual",
    "solve_fixed_point",
    "solve_newton",
    "solve_point",
    "solve_grid",
    "check_structural_bounds",
    "contraction_certificate",
    "grid_to_csv",
    "solution_to_json_dict",
]


@dataclass
class SolverConfig:
    """Tunables shared by all solve entry points."""

    tol: float = 1e-12
    max_iter: int = 10**6
    eta_floor: float = 1e-6
    continuation_factor: float = 0.5
    newton: bool = True

    def __post_init__(self) -> None:
        if self.tol <= 0 or self.eta_floor <= 0:
            raise ValidationError("tol and eta_floor must be positive")
        if not 0.0 < self.continuation_factor < 1.0:
            raise ValidationError("continuation_factor must lie in (0, 1)")


@dataclass
class Solution:
    """QVE solution at one spectral point."""

    z: complex
    m: np.ndarray
    residual: float
    iterations: int
    converged: bool = True

    @property
    def v(self) -> np.ndarray:
        """Imaginary part; the generating density seen at height Im z."""
        return np.imag(self.m)


@dataclass
class GridSolution:
    """Solutions along a real grid at a fixed final height ``eta``."""

    tau_grid: np.ndarray
    eta: float
    solutions: list[Solution]
    avg_density: np.ndarray  # <Im m>/pi per grid point
    failed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def component_density(self, model: ModelSpec) -> np.ndarray:
        """Matrix of v_x(tau)/pi, shape (len(grid), n)."""
        return np.array([sol.v for sol in self.solutions]) / np.pi


def qve_residual(model: ModelSpec, z: complex, m: np.ndarray) -> float:
    """sup-norm of ``m + 1/(z + a + Sm)``."""
    denom = z + model.a + model.apply_S(m)
    return float(np.max(np.abs(m + 1.0 / denom)))


def _tol_scale(m: np.ndarray) -> float:
    """Stopping tolerances are relative to the iterate size: blow-up
    points with ``|m| >> 1`` cannot reach an absolute floor below
    ``eps * |m|^2``-sized rounding in the residual."""
    return max(1.0, float(np.max(np.abs(m))))


def _phi(model: ModelSpec, z: complex, m: np.ndarray) -> np.ndarray:
    return -1.0 / (z + model.a + model.apply_S(m))


def solve_fixed_point(
    model: ModelSpec,
    z: complex,
    init: Optional[np.ndarray] = None,
    config: Optional[SolverConfig] = None,
) -> Solution:
    """Plain fixed-point iteration of ``m -> -1/(z + a + Sm)``.

    Requires ``Im z > 0``; the default start is the constant vector ``i e``.
    Raises :class:`MaxIterExceeded` when the budget runs out, which signals
    that ``Im z`` is too small for plain iteration and the caller should
    switch to continuation with Newton refinement.
    """
    cfg = config or SolverConfig()
    if z.imag <= 0:
        raise ValidationError("fixed-point iteration needs Im z > 0")
    m = np.full(model.n, 1j) if init is None else np.asarray(init, dtype=complex)
    if np.any(np.imag(m) <= 0):
        raise ValidationError("initial iterate must have positive imaginary part")
    for it in range(1, cfg.max_iter + 1):
        m_next = _phi(model, z, m)
        if not np.all(np.isfinite(m_next)):
            raise Diverged("iterate left the admissible domain")
        delta = float(np.max(np.abs(m_next - m)))
        m = m_next
        # cheap convergence pre-check before paying for the residual
        if delta < 0.25 * cfg.tol * _tol_scale(m):
            res = qve_residual(model, z, m)
            if res <= cfg.tol * _tol_scale(m):
                return Solution(z=z, m=m, residual=res, iterations=it)
    raise MaxIterExceeded(
        f"no convergence after {cfg.max_iter} iterations at z={z!r}"
    )


def solve_newton(
    model: ModelSpec,
    z: complex,
    init: np.ndarray,
    config: Optional[SolverConfig] = None,
    max_newton: int = 60,
) -> Solution:
    """Newton refinement of the QVE residual from a nearby iterate.

    Linearizes ``m + 1/(z + a + Sm)``; the Jacobian is ``1 - diag(Phi^2) S``
    with ``Phi = -1/(z + a + Sm)``, the same operator that controls the
    analytic perturbation theory of the equation.  Backtracking keeps
    ``Im m > 0`` whenever ``Im z > 0``; at ``Im z = 0`` an iterate is kept
    only while ``Im m >= 0`` or it stays real (outside the support).
    """
    cfg = config or SolverConfig()
    m = np.asarray(init, dtype=complex).copy()
    if z.imag > 0 and np.any(np.imag(m) < 0):
        raise Diverged("initial iterate outside the upper half-plane domain")
    s_action = model.s_action_matrix()
    eye = np.eye(model.n)
    res = qve_residual(model, z, m)
    for it in range(1, max_newton + 1):
        if res <= cfg.tol * _tol_scale(m):
            return Solution(z=z, m=m, residual=res, iterations=it - 1)
        phi = _phi(model, z, m)
        jac = eye - (phi**2)[:, None] * s_action
        rhs = phi - m
        try:
            step = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("non-finite Newton step")
        scale = 1.0
        for _ in range(40):
            cand = m + scale * step
            ok_domain = np.all(np.imag(cand) > 0) if z.imag > 0 else (
                np.all(np.imag(cand) >= 0) or np.all(np.imag(cand) == 0)
            )
            if ok_domain:
                cand_res = qve_residual(model, z, cand)
                if cand_res < res or cand_res <= cfg.tol * _tol_scale(cand):
                    m, res = cand, cand_res
                    break
            scale *= 0.5
        else:
            raise Diverged(f"Newton stalled at residual {res:.3e} (z={z!r})")
    if res <= cfg.tol * _tol_scale(m):
        return Solution(z=z, m=m, residual=res, iterations=max_newton)
    raise Diverged(f"Newton did not reach tolerance, residual {res:.3e}")


def solve_point(
    model: ModelSpec,
    z: complex,
    config: Optional[SolverConfig] = None,
    init: Optional[np.ndarray] = None,
) -> Solution:
    """Solve at an arbitrary ``z`` with ``Im z >= eta_floor``.

    Starts with fixed-point iteration at ``Re z + i max(1, Im z)`` and
    continues geometrically down in ``eta`` with Newton warm starts; the
    ``eta`` ladder is bisected on Newton failures.
    """
    cfg = config or SolverConfig()
    eta_target = z.imag
    if eta_target < cfg.eta_floor:
        raise ValidationError("Im z below eta_floor; raise the floor or z")
    tau = z.real
    eta_top = max(1.0, eta_target)
    top_cfg = replace(cfg, max_iter=min(cfg.max_iter, 200_000))
    sol = solve_fixed_point(model, complex(tau, eta_top), init=init, config=top_cfg)
    if eta_top == eta_target:
        return sol
    m = sol.m
    total_iters = sol.iterations
    eta = eta_top
    while eta > eta_target:
        eta_next = max(eta * cfg.continuation_factor, eta_target)
        m, iters = _descend(model, tau, eta, eta_next, m, cfg, depth=0)
        total_iters += iters
        eta = eta_next
    res = qve_residual(model, complex(tau, eta_target), m)
    return Solution(
        z=complex(tau, eta_target), m=m, residual=res, iterations=total_iters
    )


def _descend(
    model: ModelSpec,
    tau: float,
    eta_from: float,
    eta_to: float,
    m: np.ndarray,
    cfg: SolverConfig,
    depth: int,
) -> tuple[np.ndarray, int]:
    """One continuation step eta_from -> eta_to, bisecting on failure."""
    z_next = complex(tau, eta_to)
    try:
        if cfg.newton:
            sol = solve_newton(model, z_next, m, cfg)
        else:
            sol = solve_fixed_point(model, z_next, init=m, config=cfg)
        return sol.m, sol.iterations
    except (Diverged, SingularJacobian, MaxIterExceeded):
        if depth >= 24:
            raise
        eta_mid = float(np.sqrt(eta_from * eta_to))
        if not eta_to < eta_mid < eta_from:
            raise
        m1, it1 = _descend(model, tau, eta_from, eta_mid, m, cfg, depth + 1)
        m2, it2 = _descend(model, tau, eta_mid, eta_to, m1, cfg, depth + 1)
        return m2, it1 + it2


def solve_grid(
    model: ModelSpec,
    tau_grid: Sequence[float] | np.ndarray,
    eta_target: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    threads: int = 1,
) -> GridSolution:
    """Solve along a real grid, continuing each point down to ``eta_target``.

    Every grid column is continued independently (warm starts only from the
    previous ``eta`` level at the same ``tau``), so the result is identical
    for any thread count.  Per-point failures are recorded in the mask and
    do not abort the sweep.
    """
    cfg = config or SolverConfig()
    eta = cfg.eta_floor if eta_target is None else float(eta_target)
    if eta < cfg.eta_floor:
        raise ValidationError("eta_target below config.eta_floor")
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0:
        return GridSolution(
            tau_grid=taus,
            eta=eta,
            solutions=[],
            avg_density=np.zeros(0),
            failed=np.zeros(0, dtype=bool),
        )

    def column(tau: float) -> tuple[Optional[Solution], bool]:
        try:
            return solve_point(model, complex(tau, eta), cfg), False
        except (Diverged, SingularJacobian, MaxIterExceeded):
            return None, True

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(column, taus))
    else:
        results = [column(t) for t in taus]

    solutions: list[Solution] = []
    failed = np.zeros(taus.size, dtype=bool)
    for k, (sol, bad) in enumerate(results):
        if bad or sol is None:
            failed[k] = True
            nan = np.full(model.n, np.nan + 0j)
            solutions.append(
                Solution(
                    z=complex(taus[k], eta),
                    m=nan,
                    residual=np.inf,
                    iterations=0,
                    converged=False,
                )
            )
        else:
            solutions.append(sol)
    avg = np.array(
        [
            np.nan if failed[k] else float(np.real(model.avg(sol.v))) / np.pi
            for k, sol in enumerate(solutions)
        ]
    )
    return GridSolution(
        tau_grid=taus, eta=eta, solutions=solutions, avg_density=avg, failed=failed
    )


def check_structural_bounds(
    solution: Solution,
    model: ModelSpec,
    partner: Optional[Solution] = None,
    rtol: float = 1e-9,
) -> dict:
    """Exact-identity checks on a solution.

    Returns booleans for the trivial bound ``|m| <= 1/Im z``, the a=0
    two-norm bound ``||m||_2 <= 2/|z|``, the support bound (density decay
    outside ``[-Sigma, Sigma]``), and the a=0 reflection symmetry
    ``m(-conj(z)) = -conj(m(z))`` when a partner solve at ``-conj(z)`` is
    supplied.  Checks that do not apply report ``None``.
    """
    z, m = solution.z, solution.m
    out: dict[str, Optional[bool]] = {}
    if z.imag > 0:
        out["trivial_bound"] = bool(
            np.max(np.abs(m)) <= (1.0 + rtol) / z.imag
        )
    else:
        out["trivial_bound"] = None
    a_zero = bool(np.all(model.a == 0))
    if a_zero and abs(z) > 0:
        out["l2_bound"] = bool(model.norm_l2(m) <= (1.0 + rtol) * 2.0 / abs(z))
    else:
        out["l2_bound"] = None
    sigma = sigma_bound(model)
    dist = abs(z.real) - sigma
    if dist > 0 and z.imag > 0:
        # Stieltjes tail: v <= pi * eta / dist^2 componentwise
        bound = np.pi * z.imag / dist**2
        out["support_bound"] = bool(
            float(np.real(model.avg(solution.v))) <= bound * (1.0 + rtol)
        )
    else:
        out["support_bound"] = None
    if partner is not None and a_zero:
        if abs(partner.z - (-np.conj(z))) > 1e-14 * max(1.0, abs(z)):
            raise ValidationError("partner must be solved at -conj(z)")
        diff = float(np.max(np.abs(partner.m + np.conj(m))))
        scale = float(np.max(np.abs(m)))
        out["symmetry"] = bool(diff <= max(rtol * scale, 10 * solution.residual))
    else:
        out["symmetry"] = None
    return out


def contraction_certificate(
    model: ModelSpec,
    z: complex,
    n_steps: int = 60,
    init: Optional[np.ndarray] = None,
) -> dict:
    """Per-step contraction ratios of the fixed-point map at ``z``.

    Ratios are reported in the half-plane metric
    ``D(u, w) = |u - w|^2 / (Im u Im w)`` in which the iteration map is a
    guaranteed contraction with factor ``(1 + (Im z)^2/||S||)^-2``, and in
    the sup norm for reference (there the guaranteed factor is the square
    root of the former, since ``D`` is quadratic in the distance).
    """
    if z.imag <= 0:
        raise ValidationError("certificate needs Im z > 0")
    m = np.full(model.n, 1j) if init is None else np.asarray(init, dtype=complex)
    iterates = [m]
    for _ in range(n_steps):
        m = _phi(model, z, m)
        iterates.append(m)

    def d_metric(u: np.ndarray, w: np.ndarray) -> float:
        return float(np.max(np.abs(u - w) ** 2 / (np.imag(u) * np.imag(w))))

    d_ratios = []
    sup_ratios = []
    for k in range(1, n_steps):
        s_prev = float(np.max(np.abs(iterates[k] - iterates[k - 1])))
        if s_prev < 1e-12:
            break  # differences at rounding level; ratios are noise
        d_prev = d_metric(iterates[k], iterates[k - 1])
        d_next = d_metric(iterates[k + 1], iterates[k])
        s_next = float(np.max(np.abs(iterates[k + 1] - iterates[k])))
        if d_prev > 0:
            d_ratios.append(d_next / d_prev)
        if s_prev > 0:
            sup_ratios.append(s_next / s_prev)
    rate = (1.0 + z.imag**2 / model.norm_S_bb()) ** -2
    return {
        "guaranteed_rate": rate,
        "d_metric_ratios": np.array(d_ratios),
        "sup_ratios": np.array(sup_ratios),
    }


# -- external interfaces ---------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def grid_to_csv(grid: GridSolution, model: ModelSpec) -> str:
    """CSV export: tau, eta, avg_density, v_0..v_{n-1}, residual, converged."""
    header = ["tau", "eta", "avg_density"]
    header += [f"v_{i}" for i in range(model.n)]
    header += ["residual", "converged"]
    lines = [",".join(header)]
    for k, sol in enumerate(grid.solutions):
        row = [_fmt(float(grid.tau_grid[k])), _fmt(grid.eta)]
        row.append(_fmt(float(grid.avg_density[k])))
        row += [_fmt(float(x)) for x in sol.v]
        row.append(_fmt(sol.residual))
        row.append("1" if sol.converged else "0")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def solution_to_json_dict(solution: Solution) -> dict:
    """JSON-ready dict for per-solution fixture dumps."""
    return {
        "z": [solution.z.real, solution.z.imag],
        "m_re": [float(x) for x in np.real(solution.m)],
        "m_im": [float(x) for x in np.imag(solution.m)],
        "residual": solution.residual,
        "iterations": solution.iterations,
        "converged": solution.converged,
    }
