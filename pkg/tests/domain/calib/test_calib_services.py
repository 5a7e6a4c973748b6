import numpy as np
import pytest

from jpy_dale.domain.calib.models import CalibConfig, ClassGaussian, FeatureSet
from jpy_dale.domain.calib.services import (
    Calibrator,
    bures_w2,
    class_stats,
    concat_features,
    denoise_features,
    fuzzy_loss,
    lw_loss_and_grad,
    perturb_cov,
)
from jpy_dale.domain.numkit.rng import Rng
from jpy_dale.errors import BadRange, DegenerateClass, ShapeMismatch


def test_bures_scalar_closed_form(gaussian):
    assert bures_w2(gaussian(0.0, 1.0), gaussian(3.0, 4.0)) == pytest.approx(10.0)


def test_bures_commuting_diagonal(gaussian):
    first = gaussian([0.0, 0.0], np.diag([1.0, 4.0]))
    second = gaussian([0.0, 0.0], np.diag([4.0, 1.0]))

    assert bures_w2(first, second) == pytest.approx(2.0)


def test_bures_identical_is_zero(gaussian):
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])

    assert bures_w2(gaussian([1.0, -1.0], cov), gaussian([1.0, -1.0], cov)) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8])
def test_bures_symmetric_and_non_negative(gaussian, random_spd, np_rng, d):
    for _ in range(10):
        first = gaussian(np_rng.standard_normal(d), random_spd(d))
        second = gaussian(np_rng.standard_normal(d), random_spd(d))

        forward, backward = bures_w2(first, second), bures_w2(second, first)

        assert forward >= 0.0
        assert forward == pytest.approx(backward, rel=1e-7, abs=1e-9)


def test_bures_rejects_unusable(gaussian):
    unusable = ClassGaussian(c=0, mean=np.zeros(1), cov=np.eye(1), count=0, usable=False)

    with pytest.raises(DegenerateClass):
        bures_w2(unusable, gaussian(0.0, 1.0))


def test_class_stats_two_points(calib_config):
    features = FeatureSet(rows=np.array([[0.0, 0.0], [2.0, 0.0]]), labels=np.array([0, 0]), weights=np.ones(2))

    stats = class_stats(features, 2, CalibConfig(min_count=1))

    np.testing.assert_allclose(stats[0].mean, [1.0, 0.0])
    np.testing.assert_allclose(stats[0].cov, np.diag([1.0, 0.0]) + calib_config.ridge * np.eye(2))
    assert stats[0].count == 2 and stats[0].usable
    assert stats[1].count == 0 and not stats[1].usable


def test_class_stats_single_weighted_point_is_ridge():
    features = FeatureSet(
        rows=np.array([[0.0, 1.0], [3.0, 5.0]]), labels=np.array([0, 0]), weights=np.array([1.0, 0.0])
    )

    stats = class_stats(features, 1, CalibConfig(ridge=1e-3))

    np.testing.assert_allclose(stats[0].cov, 1e-3 * np.eye(2))
    np.testing.assert_allclose(stats[0].mean, [0.0, 1.0])


def test_class_stats_ignore_row_order(feature_set, calib_config):
    features = feature_set()
    order = np.arange(12)[::-1]
    shuffled = FeatureSet(rows=features.rows[order], labels=features.labels[order], weights=features.weights[order])

    for a, b in zip(class_stats(features, 2, calib_config), class_stats(shuffled, 2, calib_config)):
        np.testing.assert_allclose(a.mean, b.mean)
        np.testing.assert_allclose(a.cov, b.cov)


def test_class_stats_floor_is_d_plus_one():
    rows = np.arange(6.0).reshape(3, 2)
    two = FeatureSet(rows=rows[:2], labels=np.zeros(2, dtype=np.int64), weights=np.ones(2))
    three = FeatureSet(rows=rows, labels=np.zeros(3, dtype=np.int64), weights=np.ones(3))

    assert not class_stats(two, 1, CalibConfig())[0].usable
    assert class_stats(three, 1, CalibConfig())[0].usable


def test_denoise_features_keeps_indicated_pixels():
    features = np.arange(8.0).reshape(2, 2, 2)
    labels = np.zeros((2, 2), dtype=np.int64)
    weights = np.ones((2, 2))

    everything = denoise_features(features, np.ones((2, 2), dtype=bool), labels, weights)
    half = denoise_features(features, np.array([[True, False], [True, False]]), labels, weights)
    nothing = denoise_features(features, np.zeros((2, 2), dtype=bool), labels, weights)

    np.testing.assert_array_equal(everything.rows, features.reshape(2, -1).T)
    np.testing.assert_allclose(class_stats(half, 1, CalibConfig(min_count=1))[0].mean, [1.0, 5.0])
    assert [g.count for g in class_stats(nothing, 2, CalibConfig())] == [0, 0]
    with pytest.raises(ShapeMismatch):
        denoise_features(features, np.ones((3, 3), dtype=bool), labels, weights)


def test_concat_features_empty_has_dimension():
    empty = concat_features([], 4)

    assert len(empty) == 0 and empty.dim == 4


def test_perturb_adds_constant_matrix(gaussian):
    base = gaussian([0.0, 0.0], np.eye(2))

    perturbed = perturb_cov(base, Rng(6), 0.01)

    assert 0.0 <= perturbed.epsilon <= 0.01
    np.testing.assert_allclose(perturbed.cov - np.eye(2), np.full((2, 2), perturbed.epsilon))
    np.testing.assert_array_equal(perturb_cov(base, Rng(6), 0.0).cov, np.eye(2))


@pytest.mark.parametrize("d", [1, 2, 4, 8])
def test_perturb_never_lowers_an_eigenvalue(gaussian, random_spd, d):
    for seed in range(20):
        base = gaussian(np.zeros(d), random_spd(d))

        perturbed = perturb_cov(base, Rng(seed), 0.01)

        assert np.all(np.linalg.eigvalsh(perturbed.cov) >= np.linalg.eigvalsh(base.cov) - 1e-10)


def test_alignment_descends_under_small_gradient_steps(feature_set, calib_config):
    targets = class_stats(feature_set(shift=1.0), 2, calib_config)
    fuzzy = feature_set()

    losses = []
    rows = fuzzy.rows.copy()
    for _ in range(10):
        value, gradient, _ = lw_loss_and_grad(
            FeatureSet(rows=rows, labels=fuzzy.labels, weights=fuzzy.weights), targets, calib_config
        )
        losses.append(value)
        rows = rows - 0.01 * gradient

    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))


def test_alignment_gradient_matches_finite_differences(feature_set, calib_config, numeric_grad, relative_error):
    targets = class_stats(feature_set(shift=1.0), 2, calib_config)
    fuzzy = feature_set()

    def loss(rows):
        moved = FeatureSet(rows=rows, labels=fuzzy.labels, weights=fuzzy.weights)
        value, _, _ = lw_loss_and_grad(moved, targets, calib_config)
        return value

    value, gradient, used = lw_loss_and_grad(fuzzy, targets, calib_config)

    assert used == [0, 1]
    assert value > 0.0
    assert relative_error(gradient, numeric_grad(loss, fuzzy.rows.copy())) <= 1e-4


def test_alignment_with_matching_statistics_is_zero(feature_set, calib_config):
    fuzzy = feature_set()

    value, gradient, _ = lw_loss_and_grad(fuzzy, class_stats(fuzzy, 2, calib_config), calib_config)

    assert value == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(gradient, 0.0, atol=1e-6)


def test_alignment_skips_missing_class(feature_set, calib_config):
    full = feature_set()
    targets = class_stats(feature_set(shift=0.5), 2, calib_config)
    only_one = FeatureSet(rows=full.rows[6:], labels=full.labels[6:], weights=full.weights[6:])

    value, gradient, used = lw_loss_and_grad(only_one, targets, calib_config)

    assert used == [1]
    assert value == pytest.approx(bures_w2(targets[1], class_stats(only_one, 2, calib_config)[1]), rel=1e-6)
    assert gradient.shape == (6, 2)


def test_fuzzy_loss_reductions():
    ce = np.array([[1.0, 2.0], [3.0, 4.0]])
    mask = np.array([[1.0, 1.0], [0.5, 0.0]])
    omega = np.array([[2.0, 0.0], [1.0, 1.0]])

    assert fuzzy_loss(ce, omega, mask, lw=5.0, alpha=0.0) == pytest.approx((2.0 + 1.5) / 2.5)
    assert fuzzy_loss(ce, np.ones((2, 2)), np.ones((2, 2)), lw=2.0, alpha=0.1) == pytest.approx(2.5 + 0.2)
    assert fuzzy_loss(ce, omega, mask, lw=3.0, alpha=0.5) == pytest.approx(1.4 + 1.0 * 0.5 * 3.0)
    assert fuzzy_loss(ce, omega, np.zeros((2, 2)), lw=3.0, alpha=0.5) == 0.0
    with pytest.raises(ShapeMismatch):
        fuzzy_loss(ce, omega, np.ones((3, 3)), lw=0.0, alpha=0.0)


def test_calibrator_freezes_perturbed_targets(feature_set):
    calibrator = Calibrator(config=CalibConfig(eps_max=0.01))

    targets = calibrator.freeze_targets(feature_set(), 2, Rng(2))
    value, gradient, used = calibrator.alignment(feature_set(shift=1.0))
    dump = calibrator.dump(3, value, feature_set())

    assert [g.c for g in targets] == [0, 1]
    assert all(0.0 <= g.epsilon <= 0.01 for g in targets)
    assert value > 0.0 and used == [0, 1] and gradient.shape == (12, 2)
    assert dump["t"] == 3 and len(dump["classes"]) == 2 and len(dump["fuzzy_classes"]) == 2
    assert set(dump["classes"][0]) == {"class", "mu", "cov_eigenvalues", "count", "usable", "epsilon"}


def test_calibrator_without_alignment_returns_zero(feature_set):
    calibrator = Calibrator(config=CalibConfig(use_alignment=False))
    calibrator.freeze_targets(feature_set(), 2, Rng(2))

    value, gradient, used = calibrator.alignment(feature_set())

    assert value == 0.0 and used == [] and not gradient.any()


def test_calibrator_before_freeze_returns_zero(feature_set):
    value, gradient, used = Calibrator(config=CalibConfig()).alignment(feature_set())

    assert value == 0.0 and used == [] and gradient.shape == (12, 2)


def test_config_validation():
    with pytest.raises(BadRange):
        CalibConfig(alpha=-1.0)
