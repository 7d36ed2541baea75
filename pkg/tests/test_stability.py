import numpy as np
import pytest

from qvelab import (
    SolverConfig,
    cubic_check,
    detect_support,
    holder_check,
    semicircle_model,
    solve_grid,
    solve_perturbed,
    solve_point,
    spectral_operators,
    stability_params,
    t_vectors,
    two_block,
    two_block_critical_delta,
)
from qvelab.errors import NotSmallAlpha, PerturbationTooLarge
from qvelab.stability import apply_R, perturbation_gate


@pytest.fixture(scope="module")
def bulk_ops(sc2, cfg):
    z = 0.5 + 1e-4j
    base = solve_point(sc2, z, cfg)
    return z, spectral_operators(sc2, base)


class TestSolvePerturbed:
    def test_zero_perturbation_is_identity(self, sc2, cfg, bulk_ops):
        z, ops = bulk_ops
        res = solve_perturbed(sc2, z, np.zeros(2), ops=ops, config=cfg)
        assert np.max(np.abs(res.g - res.m)) == 0.0
        assert res.theta == 0.0 and res.r_norm == 0.0
        assert res.cubic_residual == 0.0

    def test_constant_shift_solves_shifted_equation(self, sc2, cfg, bulk_ops):
        z, ops = bulk_ops
        w = 1e-5
        res = solve_perturbed(sc2, z, np.full(2, w), ops=ops, config=cfg)
        indep = solve_point(sc2, z + w, cfg)
        assert np.max(np.abs(res.g - indep.m)) < 1e-8

    def test_decomposition_is_exact(self, sc2, cfg, bulk_ops):
        z, ops = bulk_ops
        rng = np.random.default_rng(4)
        d = 1e-5 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        res = solve_perturbed(sc2, z, d, ops=ops, config=cfg)
        u = (res.g - res.m) / np.abs(res.m)
        recon = res.theta * ops.b + res.r
        assert np.max(np.abs(u - recon)) < 1e-12
        # the remainder has no component under the oblique pairing
        bt = ops.b_tilde
        assert abs(bt @ (sc2.sqrt_weights * res.r)) < 1e-12

    def test_remainder_is_second_order(self, sc2, cfg, bulk_ops):
        z, ops = bulk_ops
        rng = np.random.default_rng(5)
        consts = []
        for _ in range(20):
            d = 2e-5 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
            res = solve_perturbed(sc2, z, d, ops=ops, config=cfg)
            lhs = np.max(np.abs(res.r - apply_R(ops, d)))
            rhs = abs(res.theta) ** 2 + np.max(np.abs(d)) ** 2
            consts.append(lhs / rhs)
        assert max(consts) < 10.0

    def test_linear_response_in_bulk(self, sc2, cfg, bulk_ops):
        z, ops = bulk_ops
        eps = float(np.real(sc2.avg(np.imag(ops.m))))
        assert eps >= 0.2
        rng = np.random.default_rng(6)
        for _ in range(10):
            d = 1e-3 * rng.standard_normal(2)
            res = solve_perturbed(
                sc2, z, d, ops=ops, config=cfg, enforce_gate=False
            )
            gm = np.max(np.abs(res.g - res.m))
            assert gm <= 20.0 * np.max(np.abs(d)) / eps**2

    def test_gate_enforced(self, sc2, cfg, bulk_ops):
        z, ops = bulk_ops
        with pytest.raises(PerturbationTooLarge):
            solve_perturbed(sc2, z, np.full(2, 0.5), ops=ops, config=cfg)

    def test_gate_value_is_positive_and_small(self, sc2, bulk_ops):
        _, ops = bulk_ops
        gate = perturbation_gate(sc2, 1.0, 10.0)
        assert 0.0 < gate < 0.1


class TestCubicCheck:
    def test_near_edge_pass(self, sc4, cfg):
        z = 2.0 - 1e-3 + 1e-6j
        ops = spectral_operators(sc4, solve_point(sc4, z, cfg))
        res = solve_perturbed(sc4, z, np.full(4, 1e-7), ops=ops, config=cfg)
        residual, bound, ok = cubic_check(res, ops)
        assert ok and residual <= bound

    def test_dyadic_shift_family_stays_bounded(self, sc4, cfg):
        z = 2.0 - 2e-3 + 1e-6j
        ops = spectral_operators(sc4, solve_point(sc4, z, cfg))
        ratios = []
        for w in np.geomspace(1e-6, 1e-8, 6):
            res = solve_perturbed(sc4, z, np.full(4, w), ops=ops, config=cfg)
            th = abs(res.theta)
            ratios.append(res.cubic_residual / (th**4 + w**2 + th * w))
        assert max(ratios) < 100.0

    def test_bulk_rejected(self, sc2, cfg, bulk_ops):
        z, ops = bulk_ops
        res = solve_perturbed(sc2, z, np.full(2, 1e-6), ops=ops, config=cfg)
        with pytest.raises(NotSmallAlpha):
            cubic_check(res, ops)


@pytest.fixture(scope="module")
def gapped(cfg):
    dc = two_block_critical_delta(3.0)
    model = two_block(3.0, 0.9 * dc, 2)
    coarse = np.arange(-2.6, 2.6, 0.01)
    fine = np.arange(1.92, 1.96, 2e-5)
    taus = np.unique(np.concatenate([coarse, fine, -fine]))
    grid = solve_grid(model, taus, 1e-6)
    return model, detect_support(grid)


class TestStabilityParams:
    def test_zero_perturbation_in_gap(self, gapped, cfg):
        model, profile = gapped
        left, right, _ = profile.gaps[-1]
        z = complex(0.5 * (left + right), 1e-6)
        ops = spectral_operators(model, solve_point(model, z, cfg))
        params = stability_params(model, profile, z, np.zeros(2), ops, cfg)
        assert params.delta == 0.0 and params.upsilon == 0.0
        assert params.varpi > 0.0

    def test_branch_arithmetic(self, sc2, cfg):
        taus = np.arange(-2.5, 2.5, 0.01)
        profile = detect_support(solve_grid(sc2, taus, 1e-4))
        z = 0.0 + 1e-4j
        ops = spectral_operators(sc2, solve_point(sc2, z, cfg))
        d = np.full(2, 1e-3)
        params = stability_params(sc2, profile, z, d, ops, cfg)
        t1, t2 = t_vectors(ops)
        expected_delta = (
            1e-6
            + abs(complex(sc2.inner(t1, d)))
            + abs(complex(sc2.inner(t2, d)))
        )
        assert params.delta == pytest.approx(expected_delta, rel=1e-12)
        branches = [params.delta ** (1 / 3)]
        if params.rho > 0:
            branches.append(params.delta / params.rho**2)
        if params.varpi > 0:
            branches.append(params.delta / params.varpi ** (2 / 3))
        assert params.upsilon == pytest.approx(min(branches), rel=1e-12)

    def test_t_vectors_are_order_one(self, bulk_ops, sc2):
        _, ops = bulk_ops
        t1, t2 = t_vectors(ops)
        assert np.max(np.abs(t1)) < 10.0
        assert np.max(np.abs(t2)) < 10.0


class TestWeakVsStrong:
    def test_zero_mean_perturbations_average_out(self, sc2, cfg, bulk_ops):
        z, ops = bulk_ops
        rng = np.random.default_rng(8)
        ratios = []
        for _ in range(30):
            d = 1e-4 * rng.standard_normal(2)
            d = d - d.mean()  # fluctuation-like: zero average
            if np.max(np.abs(d)) < 1e-8:
                continue
            res = solve_perturbed(
                sc2, z, d, ops=ops, config=cfg, enforce_gate=False
            )
            diff = res.g - res.m
            ratios.append(
                abs(complex(sc2.avg(diff))) / np.max(np.abs(diff))
            )
        assert np.median(ratios) < 0.5


class TestHolder:
    def test_refinement_stability_semicircle(self, sc2, cfg):
        h1 = holder_check(solve_grid(sc2, np.arange(-2.2, 2.2, 2e-3), 1e-6, cfg))
        h2 = holder_check(solve_grid(sc2, np.arange(-2.2, 2.2, 1e-3), 1e-6, cfg))
        assert 0.7 <= h2["worst_ratio"] / h1["worst_ratio"] <= 1.3

    def test_smooth_region_much_smaller(self, sc2, cfg):
        grid = solve_grid(sc2, np.arange(-2.2, 2.2, 2e-3), 1e-6, cfg)
        hk = holder_check(grid)
        far = solve_grid(sc2, np.arange(3.0, 3.2, 2e-3), 1e-6, cfg)
        far_ratio = holder_check(far)["worst_ratio"]
        assert far_ratio < 0.05 * hk["worst_ratio"]

    def test_worst_ratio_sits_at_cusp_for_critical_family(self, cfg):
        dc = two_block_critical_delta(3.0)
        model = two_block(3.0, dc, 2)
        taus = np.arange(-2.4, 2.4, 1e-3)
        hk = holder_check(solve_grid(model, taus, 1e-6, cfg))
        assert abs(abs(hk["tau_at_worst"]) - 1.9335) < 0.02
