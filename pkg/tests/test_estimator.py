"""scikit-learn estimator facade: params, fitting, prediction."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import tdsplit as t


@pytest.fixture
def fitted(reference_chain):
    fm = t.identity_features(2)
    traj = t.sample_trajectory(reference_chain, 5000, seed=0)
    est = t.TDValueEstimator(feature_map=fm, gamma=reference_chain.gamma, radius=8.0)
    return est.fit(traj), traj, fm


def test_get_set_params_roundtrip():
    est = t.TDValueEstimator(gamma=0.7, lam=0.3, radius=2.0)
    params = est.get_params()
    assert params["gamma"] == 0.7 and params["lam"] == 0.3
    est.set_params(lam=0.5)
    assert est.lam == 0.5


def test_clone_preserves_params(reference_chain):
    fm = t.identity_features(2)
    est = t.TDValueEstimator(feature_map=fm, gamma=0.5, lam=0.2, radius=3.0)
    c = clone(est)
    got, want = c.get_params(), est.get_params()
    assert np.array_equal(got.pop("feature_map").Phi, want.pop("feature_map").Phi)
    assert got == want
    assert not hasattr(c, "theta_bar_")


def test_predict_before_fit_raises():
    est = t.TDValueEstimator(feature_map=t.identity_features(2), gamma=0.5)
    with pytest.raises(NotFittedError):
        est.predict([0, 1])


def test_fit_requires_feature_map(reference_chain):
    traj = t.sample_trajectory(reference_chain, 10, seed=0)
    with pytest.raises(ValueError, match="feature_map"):
        t.TDValueEstimator(gamma=0.5).fit(traj)


def test_fit_matches_run_trajectory(fitted, reference_chain):
    est, traj, fm = fitted
    rec = t.run_trajectory(traj, fm, reference_chain.gamma, proj=t.ProjectionSpec.ball(8.0))
    assert np.array_equal(est.theta_, rec.theta_final)
    assert np.array_equal(est.theta_bar_, rec.theta_bars[-1])
    assert est.n_steps_ == 5000


def test_predict_values(fitted):
    est, _, fm = fitted
    vals = est.predict([0, 1, 0])
    expected = t.value_of(fm, est.theta_bar_)
    assert np.array_equal(vals, expected[[0, 1, 0]])


def test_predict_validates_states(fitted):
    est, _, _ = fitted
    with pytest.raises(ValueError):
        est.predict([0, 5])


def test_fit_accepts_array_input(reference_chain):
    fm = t.identity_features(2)
    traj = t.sample_trajectory(reference_chain, 300, seed=1)
    a = t.TDValueEstimator(feature_map=fm, gamma=0.5).fit(traj)
    b = t.TDValueEstimator(feature_map=fm, gamma=0.5).fit(traj.as_array())
    assert np.array_equal(a.theta_bar_, b.theta_bar_)


def test_mean_adjust_predictions_have_target_mean(reference_chain):
    fm = t.identity_features(2)
    traj = t.sample_trajectory(reference_chain, 20_000, seed=2)
    est = t.TDValueEstimator(
        feature_map=fm, gamma=0.5, radius=8.0, mean_adjust=True,
        stationary_weights=reference_chain.pi,
    ).fit(traj)
    values = est.predict([0, 1])
    assert float(reference_chain.pi @ values) == pytest.approx(est.v_hat_, abs=1e-12)
    # with plenty of data the estimate sits near the true stationary mean
    assert est.v_hat_ == pytest.approx(t.mean_value(reference_chain), abs=0.2)


def test_mean_adjust_requires_weights(reference_chain):
    traj = t.sample_trajectory(reference_chain, 10, seed=0)
    est = t.TDValueEstimator(feature_map=t.identity_features(2), gamma=0.5, mean_adjust=True)
    with pytest.raises(ValueError, match="stationary_weights"):
        est.fit(traj)


def test_trace_estimator_learns(reference_chain):
    fm = t.identity_features(2)
    traj = t.sample_trajectory(reference_chain, 50_000, seed=3)
    est = t.TDValueEstimator(feature_map=fm, gamma=0.5, lam=0.5, radius=8.0).fit(traj)
    target = t.td_lambda_fixed_point(reference_chain, fm, 0.5).theta
    assert np.abs(est.predict([0, 1]) - t.value_of(fm, target)).max() < 0.25


def test_estimator_deterministic(reference_chain):
    fm = t.identity_features(2)
    traj = t.sample_trajectory(reference_chain, 1000, seed=4)
    a = t.TDValueEstimator(feature_map=fm, gamma=0.5).fit(traj)
    b = t.TDValueEstimator(feature_map=fm, gamma=0.5).fit(traj)
    assert np.array_equal(a.theta_bar_, b.theta_bar_)
