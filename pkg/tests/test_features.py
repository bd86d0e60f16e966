"""Feature-map validation, repair, value reconstruction, generators."""

import json

import numpy as np
import pytest

import tdsplit as t

from conftest import random_instance


def test_identity_features_pass_through():
    fm = t.make_feature_map(np.eye(4))
    assert fm.K == 4
    assert fm.notes == ()
    assert np.array_equal(fm.Phi, np.eye(4))


def test_strict_mode_rejects_bad_rows():
    Phi = 2.0 * np.eye(3)
    with pytest.raises(ValueError, match="squared norm"):
        t.make_feature_map(Phi)


def test_strict_mode_rejects_rank_deficiency():
    Phi = np.column_stack([np.eye(4)[:, 0], np.eye(4)[:, 0]]) * 0.5
    with pytest.raises(ValueError, match="rank deficient"):
        t.make_feature_map(Phi)


def test_zero_matrix_rejected():
    with pytest.raises(ValueError, match="zero"):
        t.make_feature_map(np.zeros((3, 2)), repair=True)


def test_repair_duplicated_column_dropped():
    rng = np.random.default_rng(0)
    base = rng.standard_normal((6, 2))
    base /= 2 * np.abs(base).max()
    Phi = np.column_stack([base[:, 0], base[:, 1], base[:, 0]])
    fm = t.make_feature_map(Phi, repair=True)
    assert fm.K == 2
    assert any("dropped" in n for n in fm.notes)
    # span preserved: each original column is reproducible from the kept ones
    coeffs, *_ = np.linalg.lstsq(fm.Phi, Phi, rcond=None)
    assert np.abs(fm.Phi @ coeffs - Phi).max() <= 1e-10


def test_repair_rescales_rows():
    rng = np.random.default_rng(1)
    Phi = rng.standard_normal((6, 3))
    Phi *= 2.0 / np.linalg.norm(Phi, axis=1).max()  # max row norm exactly 2
    fm = t.make_feature_map(Phi, repair=True)
    row_norms = np.linalg.norm(fm.Phi, axis=1)
    assert row_norms.max() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(fm.Phi - Phi / 2.0).max() <= 1e-12
    assert any("scaled" in n for n in fm.notes)


def test_value_of_trivials():
    fm = t.identity_features(3)
    assert np.abs(t.value_of(fm, np.zeros(3))).max() == 0.0
    theta = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(t.value_of(fm, theta), theta)


def test_value_of_matches_per_state_dots():
    rng = np.random.default_rng(2)
    fm = t.random_unit_row_features(7, 3, seed=5)
    theta = rng.standard_normal(3)
    vals = t.value_of(fm, theta)
    for s in range(7):
        assert abs(vals[s] - float(fm.Phi[s] @ theta)) <= 1e-14


def test_value_of_linear():
    rng = np.random.default_rng(3)
    fm = t.random_unit_row_features(6, 4, seed=9)
    t1, t2 = rng.standard_normal(4), rng.standard_normal(4)
    a, b = 1.7, -0.4
    lhs = t.value_of(fm, a * t1 + b * t2)
    rhs = a * t.value_of(fm, t1) + b * t.value_of(fm, t2)
    assert np.abs(lhs - rhs).max() <= 1e-13


def test_value_of_dimension_mismatch():
    fm = t.identity_features(3)
    with pytest.raises(ValueError):
        t.value_of(fm, np.zeros(2))


def test_weighted_gram_positive_definite():
    for i in range(10):
        chain, features = random_instance(i)
        gram = features.Phi.T @ chain.D @ features.Phi
        assert np.linalg.eigvalsh(gram).min() > 0


def test_generators_and_file_loading(tmp_path):
    fm = t.features_from_spec("identity", 5)
    assert np.array_equal(fm.Phi, np.eye(5))

    fm = t.features_from_spec("fourier(3)", 6)
    assert fm.K == 3
    assert np.linalg.norm(fm.Phi, axis=1).max() <= 1.0 + 1e-12

    fm1 = t.features_from_spec("random_unit_rows(2, 7)", 5)
    fm2 = t.features_from_spec("random_unit_rows(2, 7)", 5)
    assert np.array_equal(fm1.Phi, fm2.Phi)
    assert np.allclose(np.linalg.norm(fm1.Phi, axis=1), 1.0)

    path = tmp_path / "phi.json"
    path.write_text(json.dumps((np.eye(4) * 0.5).tolist()))
    fm = t.features_from_spec(str(path), 4)
    assert fm.K == 4
    with pytest.raises(ValueError, match="rows"):
        t.features_from_spec(str(path), 5)


def test_fourier_full_rank_across_sizes():
    for n in range(2, 9):
        for K in range(1, min(n, 4) + 1):
            fm = t.fourier_features(n, K)
            assert np.linalg.svd(fm.Phi, compute_uv=False)[-1] > 1e-10
