import numpy as np
import pytest

from qvelab import (
    EnsembleSpec,
    empirical_vs_qve,
    locallaw_residuals,
    sample,
    semicircle_model,
    solve_grid,
    solve_point,
    two_block,
    two_block_critical_delta,
)
from qvelab.errors import ValidationError
from qvelab.rmt import site_counts


@pytest.fixture(scope="module")
def flat1():
    return semicircle_model(1)


class TestSampler:
    def test_offdiagonal_variance_monte_carlo(self):
        model = semicircle_model(4)
        acc = 0.0
        n_draws = 10_000
        for seed in range(n_draws):
            H = sample(EnsembleSpec(N=4, model=model, seed=seed))
            acc += H[0, 1] ** 2
        assert acc / n_draws == pytest.approx(0.25, rel=0.03)

    def test_exact_symmetry(self, flat1):
        H = sample(EnsembleSpec(N=40, model=flat1, seed=3))
        assert np.array_equal(H, H.T)

    def test_exact_hermiticity_and_variance(self, flat1):
        H = sample(EnsembleSpec(N=40, model=flat1, symmetry="complex", seed=3))
        assert np.max(np.abs(H - H.conj().T)) == 0.0
        acc = np.mean(
            [
                abs(
                    sample(
                        EnsembleSpec(N=8, model=flat1, symmetry="complex", seed=s)
                    )[0, 1]
                )
                ** 2
                * 8
                for s in range(4000)
            ]
        )
        assert acc == pytest.approx(1.0, rel=0.05)

    def test_zero_profile_gives_zero_matrix(self):
        from qvelab import build_model

        model = build_model(np.zeros(2), np.zeros((2, 2)))
        H = sample(EnsembleSpec(N=10, model=model, seed=1))
        assert np.all(H == 0.0)

    def test_deterministic_given_seed(self, flat1):
        a = sample(EnsembleSpec(N=30, model=flat1, seed=11))
        b = sample(EnsembleSpec(N=30, model=flat1, seed=11))
        assert np.array_equal(a, b)

    def test_site_counts_apportionment(self):
        counts = site_counts(np.array([1 / 65, 64 / 65]), 130)
        assert counts.tolist() == [2, 128]
        with pytest.raises(ValidationError):
            site_counts(np.array([1e-3, 1 - 1e-3]), 10)


class TestEmpiricalSpectrum:
    def test_semicircle_ks_small(self, flat1):
        spec = EnsembleSpec(N=600, model=flat1, seed=1)
        H = sample(spec)
        grid = solve_grid(flat1, np.arange(-3.0, 3.0, 0.01), 1e-6)
        assert empirical_vs_qve(H, grid) < 0.05

    def test_small_sample_distance_is_large(self, flat1):
        spec = EnsembleSpec(N=10, model=flat1, seed=2)
        H = sample(spec)
        grid = solve_grid(flat1, np.arange(-3.0, 3.0, 0.01), 1e-6)
        assert empirical_vs_qve(H, grid) > 0.05

    def test_two_block_histogram_gap_matches_detection(self):
        from qvelab import detect_support

        dc = two_block_critical_delta(3.0)
        model = two_block(3.0, dc / 2.0, 2)
        # 2080 * dc/2 = 16 exactly: the inflation is measure-preserving
        spec = EnsembleSpec(N=2080, model=model, seed=1)
        lam = np.linalg.eigvalsh(sample(spec))
        coarse = np.arange(-2.6, 2.6, 0.005)
        fine = np.arange(1.90, 2.05, 5e-5)
        taus = np.unique(np.concatenate([coarse, fine, -fine]))
        grid = solve_grid(model, taus, 1e-6)
        profile = detect_support(grid)
        gaps = [g for g in profile.gaps if g[0] > 0]
        assert gaps, "expected a detected gap on the positive side"
        left, right, _ = gaps[0]
        # the widest eigenvalue spacing near the predicted gap should
        # straddle it; a wider search window would instead pick up the
        # sparse outer island where spacings are comparably large
        inside = lam[(lam > left - 0.05) & (lam < right + 0.05)]
        spacings = np.diff(inside)
        k = int(np.argmax(spacings))
        emp_left, emp_right = inside[k], inside[k + 1]
        assert abs(emp_left - left) < 0.05
        assert abs(emp_right - right) < 0.05


class TestLocalLaw:
    def test_report_fields_and_resolvent_identity(self, flat1):
        spec = EnsembleSpec(N=500, model=flat1, seed=1)
        H = sample(spec)
        z = 1j * 500 ** -0.4
        sol = solve_point(flat1, z)
        rep = locallaw_residuals(H, spec, sol)
        assert rep.resolvent_residual < 1e-10
        assert rep.max_diag_dev < 10.0 * rep.predicted_scale
        assert rep.avg_dev < rep.max_diag_dev
        assert rep.d_norm > 0 and rep.d_avg >= 0

    def test_far_point_trivially_small(self, flat1):
        spec = EnsembleSpec(N=400, model=flat1, seed=5)
        H = sample(spec)
        sol = solve_point(flat1, 1j)
        rep = locallaw_residuals(H, spec, sol)
        near = locallaw_residuals(H, spec, solve_point(flat1, 1j * 400**-0.4))
        assert rep.max_diag_dev <= 2.0
        assert rep.max_diag_dev < near.max_diag_dev

    def test_deviations_shrink_with_dimension(self, flat1):
        medians = []
        for N in (250, 500, 1000, 2000):
            z = 1j * 2000 ** -0.4  # fixed z across the sweep
            sol = solve_point(flat1, z)
            devs = []
            for seed in range(10):
                spec = EnsembleSpec(N=N, model=flat1, seed=seed)
                rep = locallaw_residuals(sample(spec), spec, sol)
                devs.append(rep.max_diag_dev)
            medians.append(float(np.median(devs)))
        assert all(b < a for a, b in zip(medians, medians[1:]))

    def test_averaged_beats_entrywise_in_median(self, flat1):
        z = 1j * 1000 ** -0.4
        sol = solve_point(flat1, z)
        avg_devs, max_devs = [], []
        for seed in range(10):
            spec = EnsembleSpec(N=1000, model=flat1, seed=seed)
            rep = locallaw_residuals(sample(spec), spec, sol)
            avg_devs.append(rep.avg_dev)
            max_devs.append(rep.max_diag_dev)
        assert np.median(avg_devs) < np.median(max_devs)

    def test_two_block_sites_expand_correctly(self):
        model = two_block(3.0, 0.25, 2)
        spec = EnsembleSpec(N=200, model=model, seed=0)
        sol = solve_point(model, 0.5j)
        expanded = spec.solution_on_sites(sol)
        assert expanded.shape == (200,)
        assert np.all(expanded[:50] == sol.m[0])
        assert np.all(expanded[50:] == sol.m[1])
