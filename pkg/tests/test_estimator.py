import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gaugekit import GaugeRegressor


def test_soft_threshold_fit_predict():
    est = GaugeRegressor(reg_weight=0.5).fit(np.eye(2), [2.0, 0.2])
    np.testing.assert_allclose(est.coef_, [1.5, 0.0])
    np.testing.assert_allclose(est.predict(np.eye(2)), [1.5, 0.0])
    assert est.n_atoms_ == 1 and est.n_features_in_ == 2


def test_params_round_trip():
    est = GaugeRegressor(family="NonnegOrthant", reg_weight=2.0)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    twin.set_params(reg_weight=3.0)
    assert twin.reg_weight == 3.0 and est.reg_weight == 2.0


def test_sparse_recovery_is_m_sparse():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 40))
    y = rng.standard_normal(5)
    est = GaugeRegressor(reg_weight=0.1).fit(X, y)
    assert np.count_nonzero(est.coef_) <= 5
    assert est.sparsify_report_.bound_met


def test_equality_fit_interpolates():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((4, 10))
    y = X @ np.where(np.arange(10) < 2, 1.0, 0.0)
    est = GaugeRegressor(fit_kind="EqualityIndicator").fit(X, y)
    np.testing.assert_allclose(est.predict(X), y, atol=1e-9)


def test_grid_family_needs_shape():
    with pytest.raises(ValueError):
        GaugeRegressor(family="TVGradient2D").fit(np.eye(4), np.ones(4))
    est = GaugeRegressor(family="TVGradient2D", family_params={"H": 2, "W": 2}, reg_weight=0.1)
    est.fit(np.eye(4), [1.0, 1.0, 0.0, 0.0])
    assert est.coef_.shape == (4,)


def test_psd_family_from_square_width():
    with pytest.raises(ValueError):
        GaugeRegressor(family="PsdCone").fit(np.eye(3), np.ones(3))


def test_truncated_fit():
    est = GaugeRegressor(fit_kind="TruncatedQuadratic", cap=0.01, reg_weight=1.0)
    est.fit(np.eye(2), [50.0, -40.0])
    np.testing.assert_array_equal(est.coef_, [0.0, 0.0])


def test_validation():
    with pytest.raises(NotFittedError):
        GaugeRegressor().predict(np.eye(2))
    with pytest.raises(ValueError):
        GaugeRegressor().fit(np.eye(2), [1.0, np.nan])
    est = GaugeRegressor().fit(np.eye(2), [1.0, 2.0])
    with pytest.raises(ValueError):
        est.predict(np.eye(3))
    with pytest.raises(ValueError):
        GaugeRegressor(fit_kind="Huber").fit(np.eye(2), [1.0, 2.0])
