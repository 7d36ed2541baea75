"""Symmetric scaling: the equation on the imaginary axis.

With ``a = 0`` the equation at ``z = i eta`` closes on the imaginary part
alone: ``1/v = eta + Sv``.  At ``eta = 0`` this is the symmetric matrix
scaling (DAD) problem ``v (Sv) = 1``; solvability is governed by the
combinatorics of the zero pattern: unique solution iff the pattern is
fully indecomposable, solvable iff it has total support.  The solution at
any ``eta >= 0`` is the unique minimizer of

    J_eta(w) = <w, Sw> - 2 <log w> + 2 eta <w>

over positive functions, which gives a solver-independent check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.optimize
import scipy.sparse
import scipy.sparse.csgraph

from .errors import (
    DimensionTooLarge,
    Diverged,
    NonPositiveInput,
    ValidationError,
)
from .model import ModelSpec, is_fully_indecomposable

__all__ = [
    "ScalingResult",
    "scale_symmetric",
    "j_functional",
    "diagnose_scalability",
    "has_total_support",
]

BLOWUP_NORM = 1e6


@dataclass
class ScalingResult:
    v: Optional[np.ndarray]
    residual: float
    status: str  # unique | non_unique | not_scalable | undetermined
    j_value: Optional[float]
    iterations: int = 0


def j_functional(model: ModelSpec, w: np.ndarray, eta: float) -> float:
    """Variational functional whose unique minimizer is ``v(i eta)``."""
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise NonPositiveInput("J is defined on strictly positive vectors")
    quad = float(np.real(model.inner(w, model.apply_S(w))))
    return quad - 2.0 * float(model.avg(np.log(w))) + 2.0 * eta * float(model.avg(w))


def _newton_polish(
    model: ModelSpec, v: np.ndarray, eta: float, tol: float, sweeps: int = 40
) -> np.ndarray:
    """Newton steps on ``v * (eta + Sv) - 1 = 0``, guarded to stay positive."""
    action = model.s_action_matrix()
    for _ in range(sweeps):
        sv = eta + model.apply_S(v)
        r = v * sv - 1.0
        if float(np.max(np.abs(r))) <= 0.01 * tol:
            break
        jac = np.diag(sv) + v[:, None] * action
        try:
            step = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        while scale > 1e-4 and np.any(v - scale * step <= 0):
            scale *= 0.5
        v = v - scale * step
    return v


def scale_symmetric(
    model: ModelSpec,
    eta: float = 0.0,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> ScalingResult:
    """Damped iteration ``v <- (1-theta) v + theta / (eta + Sv)``.

    Requires ``a = 0``.  For ``eta > 0`` this converges to the imaginary
    part of the half-plane solution at ``i eta``.  At ``eta = 0`` it
    converges exactly when the kernel is scalable; divergence is genuine
    blow-up and is reported as ``not_scalable`` once the iterate norm
    passes 1e6 or the budget is exhausted with a growing norm.  Damping
    starts at 1/2 and halves whenever the residual oscillates upward,
    which tames the 2-cycles the undamped map develops on bipartite-like
    patterns.
    """
    if np.any(model.a != 0):
        raise ValidationError("scaling requires a = 0")
    if eta < 0:
        raise ValidationError("eta must be nonnegative")
    n = model.n
    v = np.ones(n)
    theta = 0.5
    prev_res = np.inf
    grew = 0
    for it in range(1, max_iter + 1):
        sv = eta + model.apply_S(v)
        if np.any(sv <= 0):
            return ScalingResult(None, np.inf, "not_scalable", None, it)
        v_new = (1.0 - theta) * v + theta / sv
        res = float(np.max(np.abs(v_new * (eta + model.apply_S(v_new)) - 1.0)))
        norm = float(np.max(v_new))
        if norm > BLOWUP_NORM:
            return ScalingResult(None, res, "not_scalable", None, it)
        if res > prev_res * (1.0 + 1e-12):
            grew += 1
            if grew >= 8:
                theta = max(theta * 0.5, 1e-3)
                grew = 0
        v = v_new
        prev_res = res
        if res <= 100 * tol:
            v = _newton_polish(model, v, eta, tol)
            res = float(np.max(np.abs(v * (eta + model.apply_S(v)) - 1.0)))
            if res <= tol:
                break
    else:
        # budget exhausted: distinguish slow convergence from blow-up
        if float(np.max(v)) > 1e3 and eta == 0.0:
            return ScalingResult(None, prev_res, "not_scalable", None, max_iter)
        raise Diverged(
            f"no convergence after {max_iter} iterations (residual {prev_res:.3e})"
        )

    status = "unique"
    if eta == 0.0:
        try:
            status = diagnose_scalability(model.S > 0)
        except DimensionTooLarge:
            fid, _ = (
                is_fully_indecomposable(model.S > 0) if n <= 20 else (None, None)
            )
            status = "unique" if fid else "undetermined"
    return ScalingResult(
        v=v,
        residual=res,
        status=status,
        j_value=j_functional(model, v, eta),
        iterations=it,
    )


def has_total_support(pattern: np.ndarray) -> bool:
    """Every nonzero entry lies on a positive permutation diagonal.

    Entry (i, j) qualifies iff the bipartite graph of the pattern minus
    row i and column j still has a perfect matching; equivalently some
    permutation hits (i, j) through nonzero entries only.
    """
    P = np.asarray(pattern) != 0
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValidationError("pattern must be square")

    def matching_size(mask: np.ndarray) -> int:
        if mask.size == 0:
            return 0
        graph = scipy.sparse.csr_matrix(mask.astype(np.int8))
        match = scipy.sparse.csgraph.maximum_bipartite_matching(
            graph, perm_type="column"
        )
        return int(np.sum(match >= 0))

    if matching_size(P) < n:
        return False  # not even one positive diagonal: no support at all
    rows = np.arange(n)
    for i in range(n):
        for j in range(n):
            if not P[i, j]:
                continue
            minor = P[np.ix_(rows != i, rows != j)]
            if matching_size(minor) < n - 1:
                return False
    return True


def diagnose_scalability(pattern: np.ndarray) -> str:
    """'unique' iff FID, 'non_unique' iff total support without FID,
    'not_scalable' otherwise.  Capped at n = 12."""
    P = np.asarray(pattern) != 0
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValidationError("pattern must be square")
    if n > 12:
        raise DimensionTooLarge(f"scalability diagnosis capped at n=12, got {n}")
    fid, _ = is_fully_indecomposable(P)
    if fid:
        return "unique"
    if has_total_support(P):
        return "non_unique"
    return "not_scalable"
