import hashlib
import math

import numpy as np
import pytest

from jpy_dale.checksum import ParameterChecksum, parameter_checksum
from jpy_dale.domain.numkit.autodiff import Graph, grad
from jpy_dale.domain.segmodel.models import ModelParams, WeightedImage
from jpy_dale.domain.segmodel.network import (
    ce_map,
    forward,
    init,
    log_dice_node,
    loss_and_grads,
    pixel_loss_and_grads,
    pixel_window,
    seg_loss,
)
from jpy_dale.errors import BadRange, NonFiniteValue, ShapeMismatch


def test_init_shapes_and_zero_biases():
    params = init(0, d=4, classes=3, channels=2, hidden=5)

    assert params.shapes == ((5, 2, 3, 3), (5,), (4, 5, 3, 3), (4,), (3, 4, 1, 1), (3,))
    assert (params.channels, params.hidden, params.feature_dim, params.classes) == (2, 5, 4, 3)
    assert not params["conv1.bias"].any()
    assert np.abs(params["conv1.weight"]).max() <= math.sqrt(1 / 18)


def test_init_is_deterministic_per_seed():
    a, b, c = init(11), init(11), init(12)

    np.testing.assert_array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), c.flat())


@pytest.mark.parametrize("kwargs", [{"d": 1}, {"classes": 1}, {"channels": 0}, {"hidden": 0}])
def test_init_rejects_degenerate_sizes(kwargs):
    with pytest.raises(BadRange):
        init(0, **kwargs)


def test_params_reject_non_finite_values(tiny_params):
    tensors = list(tiny_params)
    tensors[0] = tensors[0].copy()
    tensors[0][0, 0, 0, 0] = np.nan

    with pytest.raises(NonFiniteValue):
        ModelParams(tensors=tuple(tensors))


def test_params_flat_round_trip(tiny_params):
    restored = tiny_params.unflat(tiny_params.flat() * 2.0)

    np.testing.assert_allclose(restored["conv2.weight"], tiny_params["conv2.weight"] * 2.0)
    with pytest.raises(ShapeMismatch):
        tiny_params.unflat(np.zeros(3))


def test_forward_shapes(tiny_params, tiny_batch):
    image, _, _ = tiny_batch

    out = forward(tiny_params, image[0])

    assert out.logits.shape == (2, 6, 7)
    assert out.features.shape == (3, 6, 7)
    assert out.prediction.shape == (6, 7)
    assert np.all(out.features >= 0)


def test_forward_rejects_wrong_channel_count(tiny_params):
    with pytest.raises(ShapeMismatch):
        forward(tiny_params, np.zeros((2, 4, 4)))


def test_uniform_logits_give_ln2(tiny_batch):
    _, label, _ = tiny_batch
    logits = np.zeros((2, 6, 7))

    np.testing.assert_allclose(ce_map(logits, np.eye(2)[label].transpose(2, 0, 1)), math.log(2))
    assert seg_loss(logits, label, np.ones((6, 7))) == pytest.approx(math.log(2))
    assert seg_loss(logits, label, np.ones((6, 7)), normalized=False) == pytest.approx(42 * math.log(2))


def test_seg_loss_zero_weight_and_negative_weight(tiny_batch):
    _, label, _ = tiny_batch
    logits = np.ones((2, 6, 7))

    assert seg_loss(logits, label, np.zeros((6, 7))) == 0.0
    with pytest.raises(BadRange):
        seg_loss(logits, label, -np.ones((6, 7)))


def test_loss_matches_forward(tiny_params, tiny_batch, np_rng):
    image, label, targets = tiny_batch
    weights = np_rng.uniform(size=(6, 7))

    value, _ = loss_and_grads(tiny_params, image, targets, weights)

    assert value == pytest.approx(seg_loss(forward(tiny_params, image).logits, label, weights))


def test_loss_gradient_matches_finite_differences(tiny_params, tiny_batch, np_rng, numeric_grad, relative_error):
    image, label, targets = tiny_batch
    weights = np_rng.uniform(size=(6, 7))

    _, grads = loss_and_grads(tiny_params, image, targets, weights)
    numeric = numeric_grad(
        lambda flat: seg_loss(forward(tiny_params.unflat(flat), image).logits, label, weights),
        tiny_params.flat(),
    )

    assert relative_error(np.concatenate([g.reshape(-1) for g in grads]), numeric) < 1e-5


def test_pixel_gradients_sum_to_full_gradient(tiny_params, tiny_batch):
    image, _, targets = tiny_batch
    full_value, full_grads = loss_and_grads(tiny_params, image, targets, np.ones((6, 7)), normalized=False)

    total_value = 0.0
    total_grads = [np.zeros_like(g) for g in full_grads]
    for y in range(6):
        for x in range(7):
            value, grads = pixel_loss_and_grads(tiny_params, image, targets, y, x)
            total_value += value
            total_grads = [a + b for a, b in zip(total_grads, grads)]

    assert total_value == pytest.approx(full_value, rel=1e-10)
    for a, b in zip(total_grads, full_grads):
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_pixel_window_marks_out_of_image_cells(tiny_batch):
    image, _, _ = tiny_batch

    crop, valid = pixel_window(image, 0, 0)

    assert crop.shape == (1, 5, 5)
    assert not valid[:2].any() and not valid[:, :2].any()
    assert valid[2:, 2:].all()
    np.testing.assert_array_equal(crop[0, 2:, 2:], image[0, :3, :3])


def test_log_dice_gradient_matches_finite_differences(tiny_batch, np_rng, numeric_grad, relative_error):
    _, _, targets = tiny_batch
    weights = np_rng.uniform(size=(6, 7))
    logits = np_rng.standard_normal((2, 6, 7))

    def value(x):
        graph = Graph()
        return float(log_dice_node(graph, graph.parameter(x), targets, weights).value)

    graph = Graph()
    node = graph.parameter(logits)
    (analytic,) = grad(graph, log_dice_node(graph, node, targets, weights), [node])

    assert value(logits) > 0.0
    assert relative_error(analytic, numeric_grad(value, logits)) < 1e-6


def test_weighted_image_checks_shapes():
    with pytest.raises(ShapeMismatch):
        WeightedImage(image=np.zeros((1, 4, 4)), targets=np.zeros((2, 4, 4)), weights=np.zeros((4, 5)))


@pytest.mark.parametrize("dy, dx", [(1, 0), (0, 2), (2, 3)])
def test_forward_commutes_with_interior_shifts(tiny_params, np_rng, dy, dx):
    image = np_rng.uniform(size=(1, 12, 12))
    shifted = np.zeros_like(image)
    shifted[:, dy:, dx:] = image[:, : 12 - dy, : 12 - dx]

    logits = forward(tiny_params, image).logits
    moved = forward(tiny_params, shifted).logits

    np.testing.assert_allclose(moved[:, 2 + dy : 10, 2 + dx : 10], logits[:, 2 : 10 - dy, 2 : 10 - dx], atol=1e-12)


def test_hand_built_network_logits(threshold_params):
    out = forward(threshold_params, np.array([[0.0, 0.25], [0.75, 1.0]]))

    np.testing.assert_array_equal(out.logits, [[[0.5, 0.25], [0.0, 0.0]], [[-0.25, 0.0], [0.5, 0.75]]])
    np.testing.assert_array_equal(out.prediction, [[0, 0], [1, 1]])
    assert hashlib.sha256(np.ascontiguousarray(out.logits, dtype="<f8").tobytes()).hexdigest() == (
        "a805d46db5b9cc5199ab606182ad39c7d5b4776a62059031685bc3713449dbe1"
    )


def test_hand_built_network_checksum(threshold_params):
    assert ParameterChecksum().digest(threshold_params) == (
        "77c7ae542d0e37efcd2ec934caced4b568bfae88f989526848598d9f2e00208c"
    )
    assert parameter_checksum(threshold_params) == "77c7ae542d0e37ef"
