import csv
import math

import numpy as np
import pytest

from jpy_dale.domain.dataio.models import Dataset
from jpy_dale.domain.partition.models import PartitionSettings
from jpy_dale.domain.partition.services import split
from jpy_dale.domain.segmodel.checkpoint import decode_checkpoint, encode_checkpoint
from jpy_dale.domain.segmodel.models import WeightedImage
from jpy_dale.domain.segmodel.network import forward, init, loss_and_grads, targets_for
from jpy_dale.domain.trainer.logbook import RunLog
from jpy_dale.domain.trainer.models import RunConfig
from jpy_dale.domain.trainer.services import (
    BaselineArm,
    Evaluator,
    build_items,
    checkpoint_payload,
    dale_iteration,
    initial_state,
    objective,
    region_sets,
    restore_state,
    run,
)
from jpy_dale.enums import Mode, Phase, Region, Split
from jpy_dale.trainer_factory import create_arm


@pytest.fixture(scope="module")
def dale_run(tiny_dataset, tmp_path_factory):
    config = RunConfig(T=2, patch_h=8, patch_w=8, d=3, hidden=3, batch_size=2, pixel_cap=8, lr=1e-2, seed=5)
    out_dir = tmp_path_factory.mktemp("dale")
    log = RunLog(out_dir)
    state = run(config, tiny_dataset, create_arm(config, run_log=log), log)
    log.close()
    return config, state, out_dir


@pytest.fixture
def single_item(np_rng):
    image = np_rng.uniform(size=(1, 6, 6))
    label = (image[0] > 0.5).astype(np.int64)
    return WeightedImage(image=image, targets=targets_for(label, 2), weights=np_rng.uniform(size=(6, 6)))


def test_objective_matches_single_image_loss(single_item):
    params = init(3, d=3, hidden=3)

    value, grads, logits, lw = objective(params, [single_item])
    expected_value, expected_grads = loss_and_grads(params, single_item.image, single_item.targets, single_item.weights)

    assert value == pytest.approx(expected_value)
    assert lw == 0.0
    assert logits[0].shape == (2, 6, 6)
    for a, b in zip(grads, expected_grads):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_alignment_hook_enters_value_and_gradient(single_item, numeric_grad, relative_error, np_rng):
    params = init(3, d=3, hidden=3)
    feature_grad = np_rng.standard_normal((3, 6, 6))

    base_value, base_grads, _, _ = objective(params, [single_item])
    value, grads, _, lw = objective(params, [single_item], alignment=lambda features: ([feature_grad], 0.5, 2.0))

    def surrogate(flat):
        return float(np.sum(feature_grad * forward(params.unflat(flat), single_item.image).features))

    difference = np.concatenate([(a - b).reshape(-1) for a, b in zip(grads, base_grads)]) / 0.5
    assert value == pytest.approx(base_value + 1.0)
    assert lw == 2.0
    assert relative_error(difference, numeric_grad(surrogate, params.flat())) < 1e-5


def test_zero_feature_gradient_only_shifts_value(single_item):
    params = init(3, d=3, hidden=3)

    base_value, base_grads, _, _ = objective(params, [single_item])
    value, grads, _, _ = objective(params, [single_item], alignment=lambda f: ([np.zeros((3, 6, 6))], 0.3, 2.0))

    assert value == pytest.approx(base_value + 0.6)
    for a, b in zip(grads, base_grads):
        np.testing.assert_array_equal(a, b)


def test_region_sets_carry_masks(tiny_dataset):
    regions = [split(s, PartitionSettings(patch_h=8, patch_w=8)) for s in tiny_dataset.split(Split.TRAIN)]

    nonfuzzy, fuzzy = region_sets(regions, 2)

    for item, region in zip(nonfuzzy, regions):
        np.testing.assert_array_equal(item.weights, region.masks.nonfuzzy)
    for item, region in zip(fuzzy, regions):
        np.testing.assert_array_equal(item.weights, region.masks.fuzzy)
        np.testing.assert_array_equal(item.image, region.base.channels_first())


def test_literal_items_mask_image_and_soften_targets(tiny_dataset):
    region = split(tiny_dataset.split(Split.TRAIN)[0], PartitionSettings(patch_h=8, patch_w=8))

    (item,) = build_items([region], Region.FUZZY, 2, literal=True)

    np.testing.assert_allclose(item.image, region.base.channels_first() * region.masks.fuzzy[None])
    np.testing.assert_allclose(item.targets.sum(axis=0), 1.0)
    np.testing.assert_allclose(item.targets[1], region.masks.fuzzy * (region.base.label == 1))
    np.testing.assert_array_equal(item.weights, np.ones(region.base.shape))


def test_run_alternates_phases_and_chains_parameters(dale_run):
    _, state, _ = dale_run
    rows = state.history

    assert [(row["t"], row["phase"]) for row in rows] == [(1, "nonfuzzy"), (1, "fuzzy"), (2, "nonfuzzy"), (2, "fuzzy")]
    assert [row["steps"] for row in rows] == [2, 4, 6, 8]
    for previous, current in zip(rows, rows[1:]):
        assert current["theta_in"] == previous["theta_out"]
    assert state.t == 2 and state.steps == 8


def test_run_reports_metrics_and_confidence(dale_run):
    _, state, _ = dale_run

    for row in state.history:
        assert 0.0 <= row["Dice"] <= 1.0
        assert 0.0 <= row["Dice_noisy"] <= 1.0
        assert math.isfinite(row["loss"])
    fuzzy_row = state.history[1]
    assert math.isfinite(fuzzy_row["L_W"])
    assert len(state.omegas) == 3
    for conf in state.omegas:
        assert np.all((conf.omega >= 0.0) & (conf.omega <= 2.0))


def test_run_directory_layout(dale_run):
    _, _, out_dir = dale_run

    with (out_dir / "metrics.csv").open() as f:
        rows = list(csv.DictReader(f))

    assert len(rows) == 4
    assert (out_dir / "checkpoints" / "t0001.ckpt").is_file()
    assert (out_dir / "checkpoints" / "t0002.ckpt").is_file()
    assert sorted(p.name for p in (out_dir / "omega").iterdir())[:3] == [
        "t0001_img0000.dlf1",
        "t0001_img0001.dlf1",
        "t0001_img0002.dlf1",
    ]


def test_resume_follows_uninterrupted_run(dale_run, tiny_dataset, tmp_path):
    config, uninterrupted, _ = dale_run
    first_config = RunConfig.from_dict({**config.to_dict(), "T": 1})
    log = RunLog(tmp_path)
    run(first_config, tiny_dataset, create_arm(first_config), log)
    log.close()

    restored = restore_state(tmp_path / "checkpoints" / "t0001.ckpt", config)
    resumed = run(config, tiny_dataset, create_arm(config), state=restored)

    np.testing.assert_array_equal(resumed.params.flat(), uninterrupted.params.flat())
    assert resumed.steps == uninterrupted.steps
    assert resumed.history[-1]["theta_out"] == uninterrupted.history[-1]["theta_out"]


def test_same_seed_same_trajectory(dale_run, tiny_dataset):
    config, uninterrupted, _ = dale_run

    again = dale_iteration(initial_state(config), tiny_dataset, config)

    assert again.history[1]["theta_out"] == uninterrupted.history[1]["theta_out"]


def test_baseline_spends_the_same_steps(dale_run, tiny_dataset):
    config, dale_state, _ = dale_run
    baseline = RunConfig.from_dict({**config.to_dict(), "mode": Mode.BASELINE.value})

    state = run(baseline, tiny_dataset, create_arm(baseline))

    assert isinstance(create_arm(baseline), BaselineArm)
    assert [row["phase"] for row in state.history] == [Phase.BASELINE.value] * 2
    assert state.steps == dale_state.steps
    assert create_arm(baseline).steps_per_iteration(3) == create_arm(config).steps_per_iteration(3)


def test_empty_fuzzy_set_spends_steps_on_nonfuzzy(constant_dataset, tiny_config):
    config = tiny_config(T=1)

    state = run(config, constant_dataset, create_arm(config))

    fuzzy_row = state.history[1]
    assert state.steps == 2
    assert fuzzy_row["phase"] == "fuzzy"
    assert math.isnan(fuzzy_row["L_W"]) and math.isnan(fuzzy_row["mean_omega_clean"])
    assert state.omegas == ()


def test_checkpoint_payload_round_trip(dale_run):
    config, state, _ = dale_run
    tensors, meta = decode_checkpoint(encode_checkpoint(*checkpoint_payload(state, config)))

    assert meta["t"] == 2 and meta["steps"] == 8
    assert meta["omegas"] == [0, 1, 2]
    assert RunConfig.from_dict(meta["config"]) == config
    np.testing.assert_array_equal(tensors["omega.1"], state.omegas[1].omega)


def test_evaluator_scores_noisy_and_clean_labels(dale_run, tiny_dataset):
    _, state, _ = dale_run
    evaluator = Evaluator(2, Split.TRAIN)

    clean = evaluator.evaluate(state.params, tiny_dataset)
    noisy = evaluator.evaluate(state.params, tiny_dataset, against_clean=False)

    assert noisy.Dice == pytest.approx(evaluator.noisy_dice(state.params, tiny_dataset))
    assert 0.0 <= clean.mIoU <= 1.0


def test_evaluator_metric_row_of_hand_built_network(threshold_params, make_sample):
    label = np.zeros((4, 4), dtype=np.int64)
    label[1:3, 1:3] = 1
    image = np.full((4, 4), 0.2)
    image[1:3, 1:4] = 0.7
    over_segmented = make_sample(label, image)
    empty = make_sample(np.zeros((4, 4), dtype=np.int64))
    dataset = Dataset.in_memory([empty], [over_segmented, empty], classes=2)

    row = Evaluator(2).evaluate(threshold_params, dataset)

    assert row.to_dict() == pytest.approx({"Dice": 0.9, "mIoU": 0.875, "HD95": 0.5, "ASD": 0.1})


def test_in_memory_dataset_channels(tiny_dataset):
    assert isinstance(tiny_dataset, Dataset)
    assert initial_state(RunConfig(d=3, hidden=3), tiny_dataset.manifest.channels).params.channels == 1
