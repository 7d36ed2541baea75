import numpy as np
import pytest
from sklearn.base import clone

from qvelab import DensityOfStates, SymmetricSinkhorn, semicircle_model, two_block
from qvelab.errors import NumericError


class TestDensityOfStates:
    def test_fit_predict_semicircle(self):
        est = DensityOfStates(eta=1e-5, grid_step=0.02)
        est.fit(semicircle_model(2))
        taus = np.array([-1.0, 0.0, 1.0])
        rho = np.sqrt(4.0 - taus**2) / (2.0 * np.pi)
        assert np.max(np.abs(est.predict(taus) - rho)) < 5e-3
        assert len(est.support_.intervals) == 1

    def test_accepts_raw_kernel(self):
        est = DensityOfStates(eta=1e-4, grid_step=0.05).fit(np.ones((3, 3)))
        assert est.model_.n == 3

    def test_sklearn_params_roundtrip(self):
        est = DensityOfStates(eta=1e-4, grid_step=0.05, pad=0.5)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()
        cloned.set_params(grid_step=0.1)
        assert cloned.grid_step == 0.1

    def test_minima_classification_exposed(self):
        from qvelab import two_block_critical_delta

        dc = two_block_critical_delta(3.0)
        est = DensityOfStates(eta=1e-6, grid_step=0.002, pad=0.3)
        est.fit(two_block(3.0, 1.1 * dc, 2))
        kinds = {kind for _, kind in est.classifications_}
        assert "nonzero_min" in kinds


class TestSymmetricSinkhorn:
    def test_flat_kernel(self):
        est = SymmetricSinkhorn().fit(np.ones((4, 4)))
        assert np.allclose(est.v_, 1.0, atol=1e-12)
        out = est.transform(np.ones((4, 4)))
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_random_kernel_becomes_doubly_stochastic(self):
        rng = np.random.default_rng(3)
        S = rng.uniform(0.1, 1.5, (6, 6))
        S = (S + S.T) / 2
        est = SymmetricSinkhorn().fit(S)
        out = est.transform(S)
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(out, out.T)

    def test_not_scalable_raises(self):
        S = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]])
        with pytest.raises(NumericError):
            SymmetricSinkhorn().fit(S)

    def test_sklearn_clone(self):
        est = SymmetricSinkhorn(eta=0.01, tol=1e-10)
        assert clone(est).get_params()["eta"] == 0.01
