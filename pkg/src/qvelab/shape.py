"""Universal density shapes, Cardano root systems, and support detection.

Near any point where the generating density is small it behaves like one
of two closed-form shape functions: a square-root-to-cube-root crossover
at support edges and a regularized cube-root cusp at small interior
minima.  Both come from the three Cardano branches of reduced cubics
``W^3 + 3W + 2 zeta`` and ``W^3 - 3W + 2 zeta``, implemented here on
their principal branches with cancellation-free factor pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.optimize

from .errors import (
    FitDiverged,
    NoSupport,
    ValidationError,
    WindowTooSmall,
    ZeroPsi,
)
from .model import ModelSpec
from .solver import GridSolution, Solution
from .spectral import SpectralData

__all__ = [
    "SupportProfile",
    "ShapeFit",
    "CardanoRoots",
    "psi_edge",
    "psi_min",
    "cardano_pos",
    "cardano_neg",
    "detect_support",
    "classify_minimum",
    "gap_estimate",
    "fit_shape",
    "fit_exponent",
    "CUSP_AMPLITUDE",
]

# v(tau0 + w) = h * CUSP_AMPLITUDE * |w|**(1/3) at an exact cusp
CUSP_AMPLITUDE = 2.0 ** (-2.0 / 3.0)

# Im of the '+' root of W^3 - 3W + 2(1+2x) equals 2*sqrt(3)*psi_edge(x)
EDGE_ROOT_SCALE = 2.0 * math.sqrt(3.0)


def psi_edge(lam):
    """Edge shape function.

    ``psi_edge(x) = sqrt((1+x)x) / (w^(2/3) + w^(-2/3) + 1)`` with
    ``w = 1 + 2x + 2 sqrt((1+x)x)``; the two denominator terms are exact
    reciprocals, which avoids the cancellation the textbook form suffers
    for large ``x``.  Behaves like ``sqrt(x)`` for small ``x`` and like
    ``2^(-4/3) x^(1/3)`` for large ``x``.
    """
    x = np.asarray(lam, dtype=float)
    if np.any(x < 0):
        raise ValidationError("psi_edge needs lam >= 0")
    root = np.sqrt((1.0 + x) * x)
    w = 1.0 + 2.0 * x + 2.0 * root
    t = np.cbrt(w) ** 2
    out = np.where(x > 0, root / (t + 1.0 / t + 1.0), 0.0)
    return float(out) if np.isscalar(lam) else out


def psi_min(lam):
    """Interior-minimum shape function (even in its argument).

    ``psi_min(x) = sqrt(1+x^2) / (u^(2/3) + u^(-2/3) - 1) - 1`` with
    ``u = sqrt(1+x^2) + |x|``; quadratic near zero, ``2^(-2/3) |x|^(1/3)``
    at infinity.
    """
    x = np.abs(np.asarray(lam, dtype=float))
    hyp = np.hypot(1.0, x)
    u = hyp + x
    t = np.cbrt(u) ** 2
    out = hyp / (t + 1.0 / t - 1.0) - 1.0
    out = np.maximum(out, 0.0)
    return float(out) if np.isscalar(lam) else out


@dataclass(frozen=True)
class CardanoRoots:
    """Three labelled roots of a reduced cubic at one ``zeta``."""

    omega0: complex
    omega_plus: complex
    omega_minus: complex
    on_cut: bool

    def as_array(self) -> np.ndarray:
        return np.array([self.omega0, self.omega_plus, self.omega_minus])


def _reciprocal_pair(wp: complex, wm: complex) -> tuple[complex, complex]:
    """Return (wp, wm) with the smaller-modulus member recomputed as the
    reciprocal of the larger.  The inputs multiply to one exactly, so this
    removes the cancellation error from the nearly-cancelling member."""
    if abs(wp) >= abs(wm):
        return wp, 1.0 / wp
    return 1.0 / wm, wm


def _phi_pair_pos(zeta: complex) -> tuple[complex, complex]:
    """(Phi(zeta), Phi(-zeta)) for Phi(z) = (sqrt(1+z^2) + z)**(1/3)."""
    s = np.sqrt(1.0 + zeta * zeta)
    wp, wm = _reciprocal_pair(s + zeta, s - zeta)
    return wp ** (1.0 / 3.0), wm ** (1.0 / 3.0)


def cardano_pos(zeta: complex) -> CardanoRoots:
    """Principal-branch roots of ``W^3 + 3W + 2 zeta``.

    ``omega0 = -2 Phi_odd``, ``omega_pm = Phi_odd +- i sqrt(3) Phi_even``
    with ``Phi(z) = (sqrt(1+z^2) + z)**(1/3)``.  The roots are analytic and
    distinct off the cut ``{i y : |y| > 1}``; on the cut they are still
    computed but flagged.
    """
    zeta = complex(zeta)
    phi_p, phi_m = _phi_pair_pos(zeta)
    even = 0.5 * (phi_p + phi_m)
    odd = 0.5 * (phi_p - phi_m)
    on_cut = abs(zeta.real) <= 1e-12 * (1.0 + abs(zeta)) and abs(zeta.imag) > 1.0
    root3 = 1j * math.sqrt(3.0)
    return CardanoRoots(
        omega0=-2.0 * odd,
        omega_plus=odd + root3 * even,
        omega_minus=odd - root3 * even,
        on_cut=on_cut,
    )


def _phi_pair_neg(zeta: complex) -> tuple[complex, complex]:
    """(Phi_plus, Phi_minus) for the negative-linear-term cubic.

    Case split on ``Re zeta`` (the three analyticity components); within
    each case the two factors are exact reciprocals and the small one is
    computed from the large one.
    """
    re = zeta.real
    if re >= 1.0:
        s = np.sqrt(zeta * zeta - 1.0)
        wp, wm = _reciprocal_pair(zeta + s, zeta - s)
        return wp ** (1.0 / 3.0), wm ** (1.0 / 3.0)
    if re <= -1.0:
        # Phi_pm(zeta) = -(-zeta -/+ sqrt(zeta^2-1))**(1/3)
        s = np.sqrt(zeta * zeta - 1.0)
        wp, wm = _reciprocal_pair(-zeta - s, -zeta + s)
        return -(wp ** (1.0 / 3.0)), -(wm ** (1.0 / 3.0))
    s = 1j * np.sqrt(1.0 - zeta * zeta)
    wp, wm = _reciprocal_pair(zeta + s, zeta - s)
    return wp ** (1.0 / 3.0), wm ** (1.0 / 3.0)


def cardano_neg(zeta: complex) -> CardanoRoots:
    """Principal-branch roots of ``W^3 - 3W + 2 zeta``.

    ``omega0 = -(Phi_plus + Phi_minus)``,
    ``omega_pm = (Phi_plus + Phi_minus)/2 +- i (sqrt(3)/2)(Phi_plus - Phi_minus)``.
    Roots coincide only at ``zeta = +-1``; the branch boundaries are the
    lines ``Re zeta = +-1``, flagged as cuts.
    """
    zeta = complex(zeta)
    phi_p, phi_m = _phi_pair_neg(zeta)
    s = phi_p + phi_m
    d = phi_p - phi_m
    on_cut = abs(abs(zeta.real) - 1.0) <= 1e-12 * (1.0 + abs(zeta))
    return CardanoRoots(
        omega0=-s,
        omega_plus=0.5 * s + 0.5j * math.sqrt(3.0) * d,
        omega_minus=0.5 * s - 0.5j * math.sqrt(3.0) * d,
        on_cut=on_cut,
    )


# -- support detection -------------------------------------------------------


@dataclass
class SupportProfile:
    """Detected support intervals, interior small minima, and gaps."""

    intervals: list[tuple[float, float]]
    minima: list[tuple[float, float]]  # (gamma, <v(gamma)>)
    gaps: list[tuple[float, float, float]]  # (left_edge, right_edge, length)

    def edges(self) -> list[float]:
        out: list[float] = []
        for a, b in self.intervals:
            out += [a, b]
        return out


def detect_support(
    grid: GridSolution,
    threshold: Optional[float] = None,
    minima_gate: Optional[float] = None,
    deep_gap_gate: Optional[float] = None,
) -> SupportProfile:
    """Support intervals and small interior minima from a density grid.

    Contiguous runs of ``avg_density > threshold`` become intervals; the
    default threshold is ``3 eta^(1/3)`` times the maximum density, since
    resolving at height ``eta`` blurs the density on the scale
    ``eta^(1/3)``.  An exact cusp also dips below that threshold over an
    ``eta``-sized run, so a below-threshold run only counts as a true gap
    when its floor is deep: ``<v> < deep_gap_gate`` (default
    ``0.5 eta^(1/3)``).  Inside a real gap the smoothed density is
    ``eta``-small, while a cusp bottoms out near ``eta^(1/3)``; shallow
    runs are merged and their dip recorded as an interior minimum.
    Strict interior local minima of the average density below
    ``minima_gate`` (default half the peak) are recorded with their
    ``<v>`` value.  Raises :class:`NoSupport` when nothing clears the
    threshold.
    """
    taus = grid.tau_grid
    dens = np.where(grid.failed, 0.0, grid.avg_density)
    if taus.size == 0 or not np.any(dens > 0):
        raise NoSupport("empty or zero density grid")
    peak = float(np.nanmax(dens))
    if threshold is None:
        threshold = 3.0 * grid.eta ** (1.0 / 3.0) * peak
    if minima_gate is None:
        minima_gate = 0.5 * peak
    if deep_gap_gate is None:
        deep_gap_gate = 0.5 * grid.eta ** (1.0 / 3.0) / np.pi
    above = dens > threshold
    if not above.any():
        raise NoSupport(f"all density below threshold {threshold:.3e}")
    runs: list[list[int]] = []
    start = None
    for k, flag in enumerate(above):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            runs.append([start, k - 1])
            start = None
    if start is not None:
        runs.append([start, taus.size - 1])
    # merge across shallow dips (unresolvable as gaps at this eta)
    merged: list[list[int]] = [runs[0]]
    forced_minima: list[int] = []
    for run in runs[1:]:
        lo, hi = merged[-1][1] + 1, run[0] - 1
        dip = dens[lo : hi + 1]
        if dip.size and float(np.min(dip)) >= deep_gap_gate:
            forced_minima.append(lo + int(np.argmin(dip)))
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    intervals = [(float(taus[a]), float(taus[b])) for a, b in merged]
    gaps = [
        (intervals[i][1], intervals[i + 1][0], intervals[i + 1][0] - intervals[i][1])
        for i in range(len(intervals) - 1)
    ]
    minima: list[tuple[float, float]] = []
    for k in range(2, taus.size - 2):
        inside = any(a < taus[k] < b for a, b in intervals)
        if not inside:
            continue
        if k in forced_minima or (
            above[k]
            and dens[k] < dens[k - 1]
            and dens[k] <= dens[k + 1]
            and dens[k] < dens[k - 2]
            and dens[k] < dens[k + 2]
            and dens[k] < minima_gate
        ):
            minima.append((float(taus[k]), float(np.pi * dens[k])))
    return SupportProfile(intervals=intervals, minima=minima, gaps=gaps)


def classify_minimum(avg_v: float, eta_floor: float, gate_factor: float = 5.0) -> str:
    """'cusp' when ``<v(gamma)>`` is below resolution, else 'nonzero_min'.

    Below ``gate_factor * eta_floor**(1/3)`` a zero and a tiny positive
    minimum cannot be told apart at resolution ``eta_floor``.
    """
    return "cusp" if avg_v < gate_factor * eta_floor ** (1.0 / 3.0) else "nonzero_min"


def gap_estimate(
    spectral: SpectralData, solution: Solution, model: ModelSpec
) -> float:
    """Predicted gap length from spectral data at an edge.

    ``Delta_hat = (4 / (27 <|m| f>)) |sigma|^3 / psi^2``; the measured gap
    over this prediction tends to one as the gap closes.  Raises
    :class:`ZeroPsi` when the quadratic-form value vanishes (degenerate
    families where the prediction is undefined).
    """
    if spectral.psi <= 1e-12 * max(1.0, spectral.sigma**2):
        raise ZeroPsi(f"psi = {spectral.psi:.3e}")
    fm = float(np.real(model.inner(spectral.f, np.abs(solution.m))))
    return 4.0 * abs(spectral.sigma) ** 3 / (27.0 * fm * spectral.psi**2)


# -- local shape fitting ----------------------------------------------------


@dataclass
class ShapeFit:
    """Least-squares local fit of the density against a universal shape."""

    kind: str                      # 'edge' | 'cusp' | 'nonzero_min'
    tau0: float
    h: np.ndarray                  # per-component amplitudes
    scale: float                   # gap length (edge) or rho (minimum)
    residual: float                # relative L2 misfit over the window
    window: tuple[float, float]


def _window_mask(
    taus: np.ndarray, tau0: float, window: tuple[float, float], side: int
) -> np.ndarray:
    lo, hi = window
    omega = taus - tau0
    if side > 0:
        return (omega >= lo) & (omega <= hi)
    if side < 0:
        return (omega <= -lo) & (omega >= -hi)
    return (np.abs(omega) >= lo) & (np.abs(omega) <= hi)


def _support_side(grid: GridSolution, tau0: float) -> int:
    """+1 when the support continues to the right of tau0, -1 to the left."""
    dens = grid.avg_density
    k = int(np.argmin(np.abs(grid.tau_grid - tau0)))
    probe = max(3, dens.size // 200)
    right = float(np.nansum(dens[k : k + probe]))
    left = float(np.nansum(dens[max(0, k - probe) : k + 1]))
    return 1 if right >= left else -1


def fit_shape(
    grid: GridSolution,
    tau0: float,
    kind: str,
    scale_hint: Optional[float] = None,
    window: Optional[tuple[float, float]] = None,
    min_points: int = 6,
) -> ShapeFit:
    """Fit component amplitudes and the scale of the local shape at tau0.

    ``v_x(tau0 + w) - v_x(tau0)`` is fitted against ``h_x * Psi(w)`` where
    Psi is the rescaled edge shape ``D^(1/3) psi_edge(|w|/D)`` (kind
    'edge', D the free scale), the regularized cusp
    ``r * psi_min(w / r^3)`` (kind 'nonzero_min', r free), or the pure
    cusp ``2^(-2/3) |w|^(1/3)`` (kind 'cusp', amplitudes only).

    Amplitudes are solved linearly for each candidate scale; the scale is
    a one-dimensional minimization of the relative misfit.  Edge windows
    default to ``[D/10, min(3 D, interval/4)]`` from the hinted gap, which
    straddles the square-root and cube-root regimes of the edge shape.
    """
    if kind not in ("edge", "cusp", "nonzero_min"):
        raise ValidationError(f"unknown shape kind {kind!r}")
    taus = grid.tau_grid
    k0 = int(np.argmin(np.abs(taus - tau0)))
    span = float(taus[-1] - taus[0])
    if kind == "edge":
        side = _support_side(grid, tau0)
        hint = scale_hint if scale_hint else span / 4
        if window is None:
            window = (hint / 10.0, min(3.0 * hint, span / 4.0))
    else:
        side = 0
        hint = scale_hint
        if window is None:
            step = float(np.median(np.diff(taus))) if taus.size > 1 else span
            window = (step, span / 8.0)
    mask = _window_mask(taus, tau0, window, side)
    mask &= ~grid.failed
    if int(mask.sum()) < min_points:
        raise WindowTooSmall(
            f"{int(mask.sum())} grid points in window {window}, need {min_points}"
        )
    omega = taus[mask] - tau0
    V = np.array([sol.v for sol in grid.solutions])  # (ntau, n)
    base = V[k0] if kind != "edge" else np.zeros(V.shape[1])
    Y = V[mask] - base[None, :]

    def misfit(shape_vals: np.ndarray) -> tuple[float, np.ndarray]:
        ss = float(shape_vals @ shape_vals)
        if ss <= 0:
            return np.inf, np.zeros(V.shape[1])
        h = (shape_vals @ Y) / ss
        resid = Y - np.outer(shape_vals, h)
        denom = float(np.sum(Y**2))
        if denom == 0:
            return np.inf, h
        return float(np.sqrt(np.sum(resid**2) / denom)), h

    if kind == "cusp":
        shape_vals = CUSP_AMPLITUDE * np.abs(omega) ** (1.0 / 3.0)
        residual, h = misfit(shape_vals)
        scale = 0.0
    else:
        if kind == "edge":
            make = lambda s: s ** (1.0 / 3.0) * psi_edge(np.abs(omega) / s)
            s_hint = hint
        else:
            make = lambda s: s * psi_min(omega / s**3)
            s_hint = hint if hint else max(float(np.pi * grid.avg_density[k0]), 1e-4)
        lo, hi = math.log(s_hint / 50.0), math.log(s_hint * 50.0)
        opt = scipy.optimize.minimize_scalar(
            lambda t: misfit(make(math.exp(t)))[0],
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if not np.isfinite(opt.fun):
            raise FitDiverged("no admissible scale in the search bracket")
        scale = math.exp(float(opt.x))
        residual, h = misfit(make(scale))
    if not np.all(np.isfinite(h)) or np.all(h <= 0):
        raise FitDiverged("fit produced non-positive amplitudes")
    return ShapeFit(
        kind=kind,
        tau0=float(tau0),
        h=h,
        scale=float(scale),
        residual=residual,
        window=window,
    )


def fit_exponent(
    grid: GridSolution,
    tau0: float,
    window: tuple[float, float],
    side: int = 0,
    min_points: int = 5,
) -> tuple[float, float]:
    """Local growth exponent by ordinary least squares on log-log data.

    Regresses ``log(<v(tau0+w)> - <v(tau0)>)`` on ``log |w|`` over the
    window; returns (exponent, log amplitude).  ``side`` restricts to one
    side of tau0 (+1 right, -1 left, 0 both).
    """
    taus = grid.tau_grid
    k0 = int(np.argmin(np.abs(taus - tau0)))
    mask = _window_mask(taus, tau0, window, side)
    mask &= ~grid.failed
    base = np.pi * grid.avg_density[k0]
    y = np.pi * grid.avg_density[mask] - base
    x = np.abs(taus[mask] - tau0)
    keep = y > 0
    if int(keep.sum()) < min_points:
        raise WindowTooSmall("not enough usable points for the exponent fit")
    coef = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(coef[0]), float(coef[1])
