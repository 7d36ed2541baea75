"""Estimator-style front ends for the two fit-shaped pipelines.

``DensityOfStates`` turns a model into a solved density with detected
support (fit) and evaluates the density at arbitrary points (predict);
``SymmetricSinkhorn`` learns the symmetric scaling of a nonnegative
kernel (fit) and applies it (transform).  Both follow the scikit-learn
parameter conventions so they compose with that ecosystem's tooling.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import NumericError, ValidationError
from .model import ModelSpec, build_model, sigma_bound
from .scaling import scale_symmetric
from .shape import classify_minimum, detect_support
from .solver import SolverConfig, solve_grid

__all__ = ["DensityOfStates", "SymmetricSinkhorn", "as_model"]


def as_model(X) -> ModelSpec:
    """Coerce estimator input into a validated model.

    Accepts a :class:`ModelSpec`, a dict with keys ``a``/``S`` (and
    optional ``weights``), a ``(a, S)`` or ``(a, S, weights)`` tuple, or a
    bare square matrix (kernel with ``a = 0``).
    """
    if isinstance(X, ModelSpec):
        return X
    if isinstance(X, dict):
        return build_model(X["a"], X["S"], X.get("weights"))
    if isinstance(X, (tuple, list)) and len(X) in (2, 3):
        return build_model(*X)
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        return build_model(np.zeros(arr.shape[0]), arr)
    raise ValidationError("cannot interpret input as a model")


class DensityOfStates(BaseEstimator):
    """Solve the self-consistent density of a model on a real grid.

    Parameters
    ----------
    eta : final spectral height for the grid solve.
    grid_step : spacing of the automatic grid (covers the support bound
        plus ``pad`` on each side).
    pad : margin added beyond the support bound.
    tol : solver residual tolerance.
    threads : parallel columns for the grid solve.

    After ``fit`` the instance carries ``tau_grid_``, ``density_``
    (``<Im m>/pi``), ``support_`` (interval/minima profile),
    ``classifications_`` for the interior minima, and ``model_``.
    """

    def __init__(
        self,
        eta: float = 1e-6,
        grid_step: float = 0.01,
        pad: float = 1.0,
        tol: float = 1e-12,
        threads: int = 1,
    ):
        self.eta = eta
        self.grid_step = grid_step
        self.pad = pad
        self.tol = tol
        self.threads = threads

    def fit(self, X, y=None):
        model = as_model(X)
        sigma = sigma_bound(model)
        lo, hi = -sigma - self.pad, sigma + self.pad
        taus = np.arange(lo, hi + self.grid_step / 2.0, self.grid_step)
        cfg = SolverConfig(tol=self.tol, eta_floor=min(self.eta, 1e-6))
        grid = solve_grid(model, taus, self.eta, cfg, threads=self.threads)
        self.model_ = model
        self.grid_ = grid
        self.tau_grid_ = grid.tau_grid
        self.density_ = grid.avg_density
        self.support_ = detect_support(grid)
        self.classifications_ = [
            (gamma, classify_minimum(avg_v, self.eta))
            for gamma, avg_v in self.support_.minima
        ]
        return self

    def predict(self, tau):
        """Interpolated average density at the requested points."""
        check_is_fitted(self, "grid_")
        tau = np.asarray(tau, dtype=float)
        dens = np.nan_to_num(self.density_, nan=0.0)
        return np.interp(tau, self.tau_grid_, dens, left=0.0, right=0.0)


class SymmetricSinkhorn(TransformerMixin, BaseEstimator):
    """Symmetric diagonal scaling of a nonnegative kernel.

    ``fit`` finds the positive vector with ``v * (Sv) = 1`` under uniform
    weights (the regularized problem at height ``eta`` when ``eta > 0``);
    ``transform`` returns the doubly stochastic ``diag(v) S diag(v) / n``.
    """

    def __init__(self, eta: float = 0.0, tol: float = 1e-12, max_iter: int = 200_000):
        self.eta = eta
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        model = as_model(np.asarray(X, dtype=float))
        result = scale_symmetric(
            model, eta=self.eta, tol=self.tol, max_iter=self.max_iter
        )
        if result.v is None:
            raise NumericError(f"kernel is not scalable (status={result.status})")
        self.model_ = model
        self.v_ = result.v
        self.status_ = result.status
        self.residual_ = result.residual
        self.j_value_ = result.j_value
        return self

    def transform(self, X):
        check_is_fitted(self, "v_")
        S = np.asarray(X, dtype=float)
        n = S.shape[0]
        if S.shape != (n, n) or n != self.v_.shape[0]:
            raise ValidationError("transform input must match the fitted kernel")
        return self.v_[:, None] * S * self.v_[None, :] / n
