"""Shared fixtures and independent oracles.

Oracles here deliberately avoid the package's own code paths: the scalar
semicircle transform is evaluated in closed form, and the two-block model
is solved through its own 2x2 coupled system with a hand-rolled Newton.
"""

from __future__ import annotations

import numpy as np
import pytest

from qvelab import SolverConfig, semicircle_model, two_block


def msc(z: complex) -> complex:
    """Closed-form semicircle Stieltjes transform, Im m > 0 on the upper
    half-plane, decaying branch on the real axis outside [-2, 2]."""
    z = complex(z)
    s = np.sqrt(z * z - 4.0)
    if z.imag > 0:
        if s.imag < 0:
            s = -s
    else:
        if (z.real > 0) == (s.real > 0):
            s = -s
    return (-z + s) / 2.0


def solve_two_block_pair(
    lam: float, delta: float, z: complex, tol: float = 1e-13
) -> tuple[complex, complex]:
    """Independent Newton on the coupled pair

        -1/mu = z + (1-delta) lam nu
        -1/nu = z + lam delta mu + (1-delta) nu

    starting from the contraction iteration at Im z >= 1 and continuing in
    small steps of Im z.  Pure scalar arithmetic, no package code.
    """

    def newton_at(zz: complex, mu: complex, nu: complex) -> tuple[complex, complex]:
        for _ in range(200):
            f1 = mu + 1.0 / (zz + (1 - delta) * lam * nu)
            f2 = nu + 1.0 / (zz + lam * delta * mu + (1 - delta) * nu)
            if max(abs(f1), abs(f2)) < tol:
                break
            d1 = zz + (1 - delta) * lam * nu
            d2 = zz + lam * delta * mu + (1 - delta) * nu
            # Jacobian of (f1, f2) in (mu, nu)
            a11, a12 = 1.0, -(1 - delta) * lam / d1**2
            a21, a22 = -lam * delta / d2**2, 1.0 - (1 - delta) / d2**2
            det = a11 * a22 - a12 * a21
            mu -= (f1 * a22 - f2 * a12) / det
            nu -= (f2 * a11 - f1 * a21) / det
        return mu, nu

    eta0 = max(1.0, z.imag)
    mu = nu = 1j
    for _ in range(400):
        zz = complex(z.real, eta0)
        mu_n = -1.0 / (zz + (1 - delta) * lam * nu)
        nu_n = -1.0 / (zz + lam * delta * mu + (1 - delta) * nu)
        if max(abs(mu_n - mu), abs(nu_n - nu)) < 1e-14:
            break
        mu, nu = mu_n, nu_n
    eta = eta0
    while eta > z.imag:
        eta = max(0.7 * eta, z.imag)
        mu, nu = newton_at(complex(z.real, eta), mu, nu)
    return mu, nu


@pytest.fixture(scope="session")
def sc2():
    return semicircle_model(2)


@pytest.fixture(scope="session")
def sc4():
    return semicircle_model(4)


@pytest.fixture(scope="session")
def tb_half():
    return two_block(3.0, 0.5, 2)


@pytest.fixture(scope="session")
def cfg():
    return SolverConfig()


@pytest.fixture(scope="session")
def semicircle_grid():
    """Criterion-scale semicircle sweep shared across test modules."""
    from qvelab import solve_grid

    model = semicircle_model(4)
    taus = np.arange(-3.0, 3.0 + 5e-3, 0.01)
    return model, solve_grid(model, taus, 1e-6)
