"""Discrete models for the quadratic vector equation.

A model is a triple ``(a, S, weights)``: a real coefficient vector, a
symmetric nonnegative kernel matrix, and a probability vector over the
``n`` sites.  All averages and operator actions are taken against the
weights:

    (S w)_x   = sum_y S[x, y] * w[y] * weights[y]
    <u, w>    = sum_x conj(u[x]) * w[x] * weights[x]
    <w>       = <1, w>

Weights are explicit (not always uniform) so that block-constant models
reduce exactly to their block dimension.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AsymmetricKernel,
    BadWeights,
    DimensionTooLarge,
    EmptyBlock,
    NegativeEntry,
    ValidationError,
)

SYMMETRY_RTOL = 1e-12

__all__ = [
    "ModelSpec",
    "StructuralReport",
    "build_model",
    "model_from_json",
    "model_to_json",
    "sigma_bound",
    "gamma_function",
    "is_fully_indecomposable",
    "primitivity_constants",
    "structural_report",
    "two_block",
    "two_block_critical_delta",
    "semicircle_model",
]


@dataclass(frozen=True)
class ModelSpec:
    """Validated discrete model ``(a, S, weights)``. Immutable once built."""

    a: np.ndarray
    S: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.a.shape[0]

    # weighted calculus ------------------------------------------------

    def apply_S(self, w: np.ndarray) -> np.ndarray:
        """Weighted kernel action ``(Sw)_x = sum_y S_xy w_y pi_y``."""
        return self.S @ (self.weights * w)

    def avg(self, w: np.ndarray) -> complex:
        """Weighted average ``<w>``."""
        return np.sum(self.weights * w)

    def inner(self, u: np.ndarray, w: np.ndarray) -> complex:
        """Weighted inner product ``<u, w>`` (conjugate-linear in ``u``)."""
        return np.sum(np.conj(u) * w * self.weights)

    def norm_l2(self, w: np.ndarray) -> float:
        """Weighted two-norm ``<w, w>**0.5``."""
        return float(np.sqrt(np.sum(np.abs(w) ** 2 * self.weights)))

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def s_action_matrix(self) -> np.ndarray:
        """Matrix of the weighted action of S on coefficient vectors."""
        return self.S * self.weights[None, :]

    def norm_S_bb(self) -> float:
        """sup-norm operator norm of S: max weighted row sum."""
        return float(np.max(self.S @ self.weights))

    def norm_S_l2_to_bb(self) -> float:
        """L2 -> sup operator norm: max weighted two-norm of a row."""
        return float(np.sqrt(np.max((self.S**2) @ self.weights)))

    def row_distances(self) -> np.ndarray:
        """Matrix of |a_x - a_y| + ||S_x - S_y||_2 over all site pairs."""
        da = np.abs(self.a[:, None] - self.a[None, :])
        diff = self.S[:, None, :] - self.S[None, :, :]
        ds = np.sqrt(np.einsum("xyk,k->xy", diff**2, self.weights))
        return da + ds

    def canonical_json(self) -> str:
        return model_to_json(self)

    def content_hash(self) -> str:
        """SHA-256 over the canonical JSON serialization."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def build_model(
    a: Sequence[float] | np.ndarray,
    S: Sequence[Sequence[float]] | np.ndarray,
    weights: Optional[Sequence[float] | np.ndarray] = None,
) -> ModelSpec:
    """Validate raw arrays into a :class:`ModelSpec`.

    Uniform weights ``1/n`` are used when ``weights`` is omitted. Raises
    :class:`AsymmetricKernel`, :class:`NegativeEntry` or :class:`BadWeights`
    on constraint violations; tolerances are tight because inputs are
    constructed, not measured.
    """
    a_arr = np.asarray(a, dtype=float).copy()
    S_arr = np.asarray(S, dtype=float).copy()
    if a_arr.ndim != 1:
        raise ValidationError("coefficient vector must be one-dimensional")
    n = a_arr.shape[0]
    if S_arr.shape != (n, n):
        raise ValidationError(f"kernel must be {n}x{n}, got {S_arr.shape}")
    scale = max(1.0, float(np.max(np.abs(S_arr))) if S_arr.size else 1.0)
    asym = float(np.max(np.abs(S_arr - S_arr.T))) if S_arr.size else 0.0
    if asym > SYMMETRY_RTOL * scale:
        raise AsymmetricKernel(f"max|S - S^T| = {asym:.3e} exceeds tolerance")
    if np.any(S_arr < 0):
        i, j = np.unravel_index(int(np.argmin(S_arr)), S_arr.shape)
        raise NegativeEntry(f"S[{i}][{j}] = {S_arr[i, j]} < 0")
    if weights is None:
        w_arr = np.full(n, 1.0 / n)
    else:
        w_arr = np.asarray(weights, dtype=float).copy()
        if w_arr.shape != (n,):
            raise BadWeights(f"weights must have length {n}")
        if np.any(w_arr <= 0):
            raise BadWeights("weights must be strictly positive")
        if abs(float(np.sum(w_arr)) - 1.0) > 1e-10:
            raise BadWeights(f"weights sum to {np.sum(w_arr)!r}, expected 1")
    S_arr = 0.5 * (S_arr + S_arr.T)  # symmetrize away round-off
    for arr in (a_arr, S_arr, w_arr):
        arr.setflags(write=False)
    return ModelSpec(a=a_arr, S=S_arr, weights=w_arr)


def model_to_json(model: ModelSpec) -> str:
    """Canonical JSON form ``{"n":..., "a":[..], "S":[[..]], "weights":[..]}``."""
    payload = {
        "n": model.n,
        "a": [float(x) for x in model.a],
        "S": [[float(x) for x in row] for row in model.S],
        "weights": [float(x) for x in model.weights],
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def model_from_json(text: str) -> ModelSpec:
    """Parse the model file format; weights are optional (uniform default)."""
    payload = json.loads(text)
    try:
        a = payload["a"]
        S = payload["S"]
    except KeyError as exc:
        raise ValidationError(f"model file missing field {exc}") from exc
    if "n" in payload and payload["n"] != len(a):
        raise ValidationError("declared dimension disagrees with data")
    return build_model(a, S, payload.get("weights"))


def sigma_bound(model: ModelSpec) -> float:
    """Support radius ``||a|| + 2 ||S||**(1/2)``.

    Every support interval of the generating measure lies in
    ``[-sigma, sigma]``.
    """
    norm_a = float(np.max(np.abs(model.a))) if model.n else 0.0
    return norm_a + 2.0 * math.sqrt(model.norm_S_bb())


def gamma_function(model: ModelSpec, tau: float) -> float:
    """Row-separation function used to convert L2 bounds into sup bounds.

    ``Gamma(tau) = min_x sqrt( sum_y pi_y (1/tau + |a_y-a_x| + ||S_y-S_x||_2)^-2 )``

    Strictly increasing in ``tau``; ``Gamma(tau) <= tau`` always, with
    equality when all rows coincide.
    """
    if tau <= 0:
        raise ValidationError("tau must be positive")
    dist = model.row_distances()
    integrand = (1.0 / tau + dist) ** -2
    per_site = np.sqrt(integrand @ model.weights)
    return float(np.min(per_site))


def is_fully_indecomposable(
    pattern: Sequence[Sequence[float]] | np.ndarray,
) -> tuple[bool, Optional[tuple[list[int], list[int]]]]:
    """Brute-force full indecomposability (FID) test, capped at n = 20.

    A nonnegative square matrix is FID when no zero submatrix indexed by
    ``I x J`` with ``|I| + |J| >= n`` exists. Returns ``(True, None)`` or
    ``(False, (I, J))`` with an offending pair. Subsets are enumerated by
    increasing bitmask, so the reported witness is the first one found in
    that order.
    """
    P = np.asarray(pattern)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValidationError("pattern must be square")
    if n > 20:
        raise DimensionTooLarge(f"FID brute force capped at n=20, got {n}")
    zero_rows = [
        int(sum(1 << j for j in range(n) if P[i, j] == 0)) for i in range(n)
    ]
    full = (1 << n) - 1
    for mask in range(1, 1 << n):
        common = full
        m, i = mask, 0
        size = 0
        while m:
            if m & 1:
                common &= zero_rows[i]
                size += 1
            m >>= 1
            i += 1
        j_size = bin(common).count("1")
        if j_size and size + j_size >= n:
            I = [i for i in range(n) if mask >> i & 1]
            J = [j for j in range(n) if common >> j & 1]
            return False, (I, J)
    return True, None


def primitivity_constants(
    model: ModelSpec, L_max: int
) -> Optional[tuple[int, float]]:
    """Smallest power L <= L_max with strictly positive weighted kernel.

    Returns ``(L, rho)`` where ``rho`` is the minimum entry of the kernel
    of ``S**L``, so that ``(S^L u)_x >= rho <u>`` for u >= 0; ``None`` when
    no such power exists up to ``L_max`` (uniform primitivity fails there).
    """
    if L_max < 1:
        raise ValidationError("L_max must be at least 1")
    for L, kernel in _primitivity_kernels(model, L_max):
        lo = float(np.min(kernel))
        if lo > 0.0:
            return L, lo
    return None


def _primitivity_kernels(model: ModelSpec, L_max: int):
    """Yield (L, kernel of S^L) for L = 1..L_max."""
    kernel = model.S.copy()
    yield 1, kernel
    for L in range(2, L_max + 1):
        kernel = model.S @ (model.weights[:, None] * kernel)
        yield L, kernel


def structural_report(
    model: ModelSpec, L_max: int = 8, fid_cap: int = 20
) -> "StructuralReport":
    """Structural constants and assumption checks in one record."""
    prim = None
    for L, kernel in _primitivity_kernels(model, L_max):
        lo = float(np.min(kernel))
        if lo > 0.0:
            prim = (L, lo)
            break
    fid = None
    witness = None
    if model.n <= fid_cap:
        fid, witness = is_fully_indecomposable(model.S > 0)
    return StructuralReport(
        sigma_bound=sigma_bound(model),
        norm_S_BB=model.norm_S_bb(),
        norm_S_L2_to_B=model.norm_S_l2_to_bb(),
        primitivity=prim,
        fid=fid,
        fid_witness=witness,
    )


@dataclass(frozen=True)
class StructuralReport:
    sigma_bound: float
    norm_S_BB: float
    norm_S_L2_to_B: float
    primitivity: Optional[tuple[int, float]]
    fid: Optional[bool]
    fid_witness: Optional[tuple[list[int], list[int]]]


def two_block(lam: float, delta: float, n: int) -> ModelSpec:
    """Two-block coupling model with kernel blocks ``[[0, lam], [lam, 1]]``.

    The first ``ceil(delta * n)`` sites (capped so the second block stays
    nonempty) form block one and carry total weight exactly ``delta``; the
    rest carry ``1 - delta``. ``a = 0``. With ``n = 2`` this is the exact
    block-reduced model.
    """
    if not lam > 0:
        raise ValidationError("lam must be positive")
    if not 0.0 < delta < 1.0:
        raise EmptyBlock(f"delta={delta} leaves an empty block")
    if n < 2:
        raise EmptyBlock("need at least one site per block")
    k = min(math.ceil(delta * n), n - 1)
    S = np.ones((n, n))
    S[:k, :k] = 0.0
    S[:k, k:] = lam
    S[k:, :k] = lam
    weights = np.empty(n)
    weights[:k] = delta / k
    weights[k:] = (1.0 - delta) / (n - k)
    return build_model(np.zeros(n), S, weights)


def two_block_critical_delta(lam: float) -> float:
    """Critical block measure at which the two-block density forms cusps.

    ``delta_c = (lam-2)**3 / (2 lam**3 - 3 lam**2 + 15 lam - 7)``, valid
    for ``lam > 2``.
    """
    if lam <= 2:
        raise ValidationError("critical delta requires lam > 2")
    return (lam - 2.0) ** 3 / (2.0 * lam**3 - 3.0 * lam**2 + 15.0 * lam - 7.0)


def semicircle_model(n: int) -> ModelSpec:
    """Flat model (all-ones kernel, a = 0): every component solves the
    scalar semicircle equation."""
    if n < 1:
        raise ValidationError("dimension must be positive")
    return build_model(np.zeros(n), np.ones((n, n)))
