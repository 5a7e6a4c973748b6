"""Training arms and the outer training loop.

A DALE iteration t runs three stages:

1. non-fuzzy phase: Adam epochs over the non-fuzzy region set, pixel weights
   M_n, starting from the previous fuzzy-phase parameters;
2. confidence: per image, K rounds of pseudo-step and confidence update at the
   non-fuzzy parameters; the frozen non-fuzzy class Gaussians are captured here;
3. fuzzy phase: Adam epochs over the fuzzy region set with pixel weights
   omega * M_f plus the alignment term on retained fuzzy features.

The baseline arm spends the same number of Adam steps on unpartitioned data
with unit pixel weights. Every stochastic choice draws from a stream keyed by
(stage, t, ...) below the run seed, so a run resumed from a checkpoint follows
the uninterrupted trajectory exactly.
"""

import logging
from pathlib import Path
from typing import Any, Callable, final

import numpy as np
import numpy.typing as npt

from ...budget import BaselineBudget, DaleBudget, StepBudget
from ...checksum import parameter_checksum
from ...contracts import TrainingArmInterface
from ...enums import Mode, Phase, Region, Split
from ...errors import EmptyRegionSet, EmptySplit
from ..calib.models import FeatureSet
from ..calib.services import Calibrator, concat_features, denoise_features, fuzzy_loss
from ..confidence.models import ConfidenceMap
from ..confidence.services import ConfidenceEstimator
from ..dataio.models import Dataset, Sample
from ..metrics.models import MetricRow
from ..metrics.services import dice, evaluate_masks, mean_rows
from ..numkit.autodiff import Graph, Node, grad
from ..numkit.rng import Rng
from ..numkit.tensor import Tensor, one_hot
from ..partition.models import RegionSample
from ..partition.services import Partitioner
from ..segmodel.checkpoint import load_checkpoint, pack_model, unpack_model
from ..segmodel.models import AdamState, ModelParams, WeightedImage
from ..segmodel.network import bind, build_forward, ce_map, forward, init, log_dice_node, seg_loss_node
from ..segmodel.optim import adam_step
from .logbook import RunLog
from .models import RunConfig, TrainState

logger = logging.getLogger("dale.trainer")

NAN = float("nan")

AlignmentHook = Callable[[list[Tensor]], tuple[list[Tensor], float, float]]
StepFn = Callable[[ModelParams, npt.NDArray[np.int64]], tuple[float, list[Tensor], float]]


def _fold(graph: Graph, nodes: list[Node]) -> Node:
    total = nodes[0]
    for node in nodes[1:]:
        total = graph.add(total, node)
    return total


def objective(
    params: ModelParams,
    items: list[WeightedImage],
    dice_loss: bool = False,
    alignment: AlignmentHook | None = None,
) -> tuple[float, list[Tensor], list[Tensor], float]:
    """Batch loss value, parameter gradients, logits per item and the alignment loss.

    Cross-entropy is weighted per pixel and normalized by the batch's total
    weight. The alignment hook receives the batch features and returns feature
    gradients, a coefficient and the alignment loss; its gradient enters the
    graph as ``coef * sum(G * features)`` and its value as ``coef * L_W``.
    """
    graph = Graph()
    nodes = bind(graph, params)
    outs = [build_forward(graph, nodes, item.image) for item in items]

    terms, value, lw = [], 0.0, 0.0
    total = float(sum(item.weights.sum() for item in items))
    if total > 0.0:
        ce = _fold(graph, [seg_loss_node(graph, lg, item.targets, item.weights) for (lg, _), item in zip(outs, items)])
        terms.append(graph.weight(ce, 1.0 / total))
        value += float(terms[-1].value)

    if dice_loss:
        dice_terms = [log_dice_node(graph, lg, item.targets, item.weights) for (lg, _), item in zip(outs, items)]
        terms.append(graph.weight(_fold(graph, dice_terms), 1.0 / len(items)))
        value += float(terms[-1].value)

    if alignment is not None:
        feature_grads, coef, lw = alignment([features.value for _, features in outs])
        if coef != 0.0 and any(g.any() for g in feature_grads):
            surrogate = _fold(graph, [graph.sum(graph.weight(f, g)) for (_, f), g in zip(outs, feature_grads)])
            terms.append(graph.weight(surrogate, coef))
        value += coef * lw

    logits = [lg.value for lg, _ in outs]
    if not terms:
        return value, [np.zeros_like(t) for t in params], logits, lw
    return value, grad(graph, _fold(graph, terms), nodes), logits, lw


def build_items(regions: list[RegionSample], region: Region, classes: int, literal: bool) -> list[WeightedImage]:
    """Training inputs of one region set.

    By default the network sees the full image and the region mask becomes the
    pixel weight. In literal mode it sees ``M * X`` against soft targets ``M * Y``
    with unit weights.
    """
    items = []
    for r in regions:
        base = r.base
        mask = r.weights(region)
        if literal:
            foreground = mask * (base.label == 1)
            targets = np.stack([1.0 - foreground, foreground])
            items.append(WeightedImage(image=r.masked_image(region), targets=targets, weights=np.ones(base.shape)))
        else:
            items.append(
                WeightedImage(image=base.channels_first(), targets=one_hot(base.label, classes), weights=mask)
            )
    return items


def full_items(samples: list[Sample], classes: int) -> list[WeightedImage]:
    return [
        WeightedImage(image=s.channels_first(), targets=one_hot(s.label, classes), weights=np.ones(s.shape))
        for s in samples
    ]


def region_sets(
    regions: list[RegionSample], classes: int, literal: bool = False
) -> tuple[list[WeightedImage], list[WeightedImage]]:
    """Non-fuzzy training items and fuzzy items carrying the fuzzy mask as weights.

    Confidence estimation and alignment always read M_f itself, whatever the
    fuzzy phase feeds the network. A non-fuzzy set without weight falls back to
    unit weights on every pixel.
    """
    nonfuzzy = build_items(regions, Region.NONFUZZY, classes, literal)
    fuzzy = [
        WeightedImage(image=item.image, targets=item.targets, weights=r.masks.fuzzy)
        for item, r in zip(build_items(regions, Region.FUZZY, classes, literal), regions)
    ]

    if sum(float(item.weights.sum()) for item in nonfuzzy) == 0.0:
        logger.warning("%s; non-fuzzy phase trains on all pixels", EmptyRegionSet("nonfuzzy"))
        nonfuzzy = full_items([r.base for r in regions], classes)
    return nonfuzzy, fuzzy


def predict(params: ModelParams, sample: Sample) -> npt.NDArray[np.int64]:
    return forward(params, sample.channels_first()).prediction


@final
class Evaluator:
    def __init__(self, classes: int, split: Split = Split.TEST):
        self.classes = classes
        self.split = split

    def evaluate(self, params: ModelParams, dataset: Dataset, against_clean: bool = True) -> MetricRow:
        """Mean metric row over the split, against clean (default) or given labels.

        Raises:
            EmptySplit: If the split has no samples
        """
        rows = []
        for sample in dataset.split(self.split):
            truth = sample.clean_label if against_clean else sample.label
            rows.append(evaluate_masks(predict(params, sample), truth, self.classes))
        return mean_rows(rows)

    def noisy_dice(self, params: ModelParams, dataset: Dataset) -> float:
        scores = []
        for sample in dataset.split(self.split):
            prediction = predict(params, sample)
            scores.append(np.mean([dice(prediction == c, sample.label == c) for c in range(1, self.classes)]))
        return float(np.mean(scores))


def evaluate(params: ModelParams, dataset: Dataset, split: Split = Split.TEST) -> MetricRow:
    return Evaluator(dataset.classes, split).evaluate(params, dataset)


class _Arm(TrainingArmInterface):
    def __init__(self, config: RunConfig, evaluator: Evaluator | None = None):
        self.config = config
        self.rng = Rng(config.seed)
        self.evaluator = evaluator or Evaluator(config.classes)

    def _run_phase(
        self,
        phase: Phase,
        params: ModelParams,
        adam: AdamState,
        size: int,
        epochs: int,
        rng: Rng,
        budget: StepBudget,
        step_fn: StepFn,
    ) -> tuple[ModelParams, AdamState, float, float, int]:
        losses, alignment, steps = [], [], 0
        for epoch in range(epochs):
            order = rng.split("epoch", epoch).permutation(size)
            for start in range(0, size, self.config.batch_size):
                value, grads, lw = step_fn(params, order[start : start + self.config.batch_size])
                params, adam = adam_step(params, grads, adam)
                losses.append(value)
                alignment.append(lw)
                steps += 1

        budget.charge(phase, steps)
        logger.debug("Phase %s took %d steps, mean loss %.6f", phase.value, steps, float(np.mean(losses)))
        return params, adam, float(np.mean(losses)), float(np.mean(alignment)), steps

    def _row(
        self,
        t: int,
        phase: Phase,
        loss: float,
        params: ModelParams,
        dataset: Dataset,
        steps: int,
        theta_in: str,
        extra: dict[str, Any] | None = None,
    ) -> dict[str, Any]:
        try:
            metrics = self.evaluator.evaluate(params, dataset).to_dict()
            noisy_dice = self.evaluator.noisy_dice(params, dataset)
        except EmptySplit as e:
            logger.warning("%s; metrics of t=%d are NaN", e, t)
            metrics = MetricRow(Dice=NAN, mIoU=NAN, HD95=NAN, ASD=NAN).to_dict()
            noisy_dice = NAN

        row: dict[str, Any] = {
            "t": t,
            "phase": phase.value,
            "loss": loss,
            **metrics,
            "mean_omega_clean": NAN,
            "mean_omega_noisy": NAN,
            "L_W": NAN,
            "steps": steps,
            "theta_in": theta_in,
            "theta_out": parameter_checksum(params),
            "Dice_noisy": noisy_dice,
            "noise_precision": NAN,
            "noise_base_rate": NAN,
        }
        row.update(extra or {})
        logger.info(
            "t=%d phase=%s loss=%.6f dice=%.4f hd95=%.3f steps=%d",
            t,
            phase.value,
            loss,
            row["Dice"],
            row["HD95"],
            steps,
        )
        return row


@final
class BaselineArm(_Arm):
    """Paradigm-free control: unit pixel weights on all training pixels."""

    @property
    def name(self) -> str:
        return Mode.BASELINE.value

    def steps_per_iteration(self, train_size: int) -> int:
        return BaselineBudget.per_iteration(train_size, self.config.batch_size, self.config.phase_epochs).total

    def iteration(self, state: TrainState, dataset: Dataset) -> TrainState:
        t = state.t + 1
        train = dataset.split(Split.TRAIN)
        items = full_items(train, self.config.classes)
        budget = BaselineBudget.per_iteration(len(train), self.config.batch_size, self.config.phase_epochs)

        def step(params: ModelParams, batch: npt.NDArray[np.int64]) -> tuple[float, list[Tensor], float]:
            value, grads, _, _ = objective(params, [items[i] for i in batch], self.config.dice_loss)
            return value, grads, 0.0

        theta_in = parameter_checksum(state.params)
        params, adam, loss, _, taken = self._run_phase(
            Phase.BASELINE,
            state.params,
            state.adam,
            len(items),
            2 * self.config.phase_epochs,
            self.rng.split("baseline", t),
            budget,
            step,
        )
        steps = state.steps + budget.settle()
        row = self._row(t, Phase.BASELINE, loss, params, dataset, steps, theta_in)
        return TrainState(
            params=params, adam=adam, t=t, steps=steps, omegas=state.omegas, history=state.history + (row,)
        )


@final
class DaleArm(_Arm):
    """Alternating non-fuzzy / fuzzy training with learned confidence and alignment."""

    def __init__(
        self,
        config: RunConfig,
        partitioner: Partitioner,
        confidence: ConfidenceEstimator,
        calibrator: Calibrator,
        evaluator: Evaluator | None = None,
        run_log: RunLog | None = None,
    ):
        super().__init__(config, evaluator)
        self.partitioner = partitioner
        self.confidence = confidence
        self.calibrator = calibrator
        self.run_log = run_log

    @property
    def name(self) -> str:
        return Mode.DALE.value

    def steps_per_iteration(self, train_size: int) -> int:
        return DaleBudget.per_iteration(train_size, self.config.batch_size, self.config.phase_epochs).total

    def _plain_step(self, items: list[WeightedImage]) -> StepFn:
        def step(params: ModelParams, batch: npt.NDArray[np.int64]) -> tuple[float, list[Tensor], float]:
            value, grads, _, _ = objective(params, [items[i] for i in batch], self.config.dice_loss)
            return value, grads, NAN

        return step

    def _nonfuzzy_targets(
        self, params: ModelParams, items: list[WeightedImage], labels: list[np.ndarray], t: int
    ) -> None:
        sets = []
        for item, label in zip(items, labels):
            features = forward(params, item.image).features
            sets.append(denoise_features(features, item.weights > 0.0, label, item.weights))
        self.calibrator.freeze_targets(
            concat_features(sets, params.feature_dim), self.config.classes, self.rng.split("perturb", t)
        )

    def estimate_confidence(
        self,
        t: int,
        theta_n: ModelParams,
        fuzzy: list[WeightedImage],
        nonfuzzy: list[WeightedImage],
        previous: tuple[ConfidenceMap | None, ...],
    ) -> list[ConfidenceMap]:
        """One confidence loop per fuzzy item at the non-fuzzy parameters, warm-started when configured."""
        size, batch_size = len(nonfuzzy), self.config.batch_size
        maps = []
        for i, item in enumerate(fuzzy):
            prior = previous[i] if self.config.warm_start and i < len(previous) else None
            start = prior if prior is not None else self.confidence.initial(item.weights.shape)

            support = item.weights > self.config.support_threshold
            if not support.any():
                maps.append(
                    ConfidenceMap(
                        omega=start.omega,
                        eta=start.eta,
                        omega_max=start.omega_max,
                        support=support,
                        evaluated=support,
                        grad_omega=np.zeros(support.shape),
                    )
                )
                continue

            def provider(k: int, i: int = i) -> list[WeightedImage]:
                order = self.rng.split("omega", t, i, k).permutation(size)[:batch_size]
                return [nonfuzzy[j] for j in order]

            maps.append(self.confidence.estimate(theta_n, item, provider, start, self.rng.split("omega", t, i), t=t))
        return maps

    @staticmethod
    def _omega_diagnostics(
        maps: list[ConfidenceMap], retained: list[np.ndarray], samples: list[Sample]
    ) -> dict[str, float]:
        clean, noisy, flagged, flagged_noisy, evaluated = [], [], 0, 0, 0
        for conf, keep, sample in zip(maps, retained, samples):
            noise = sample.noise_mask
            clean.extend(conf.omega[conf.evaluated & ~noise])
            noisy.extend(conf.omega[conf.evaluated & noise])
            dropped = conf.evaluated & ~keep
            flagged += int(dropped.sum())
            flagged_noisy += int((dropped & noise).sum())
            evaluated += int(conf.evaluated.sum())

        noisy_evaluated = len(noisy)
        return {
            "mean_omega_clean": float(np.mean(clean)) if clean else NAN,
            "mean_omega_noisy": float(np.mean(noisy)) if noisy else NAN,
            "noise_precision": flagged_noisy / flagged if flagged else NAN,
            "noise_base_rate": noisy_evaluated / evaluated if evaluated else NAN,
        }

    def _alignment_hook(
        self,
        batch: npt.NDArray[np.int64],
        masks: list[Tensor],
        retained: list[np.ndarray],
        maps: list[ConfidenceMap],
        labels: list[np.ndarray],
    ) -> AlignmentHook:
        def hook(features: list[Tensor]) -> tuple[list[Tensor], float, float]:
            sets: list[FeatureSet] = []
            keeps = []
            for i, f in zip(batch, features):
                keep = retained[i] & (masks[i] > 0.0)
                sets.append(denoise_features(f, keep, labels[i], masks[i]))
                keeps.append(keep)

            lw, rows, _ = self.calibrator.alignment(concat_features(sets, features[0].shape[0]))

            feature_grads, offset = [], 0
            for f, keep in zip(features, keeps):
                g = np.zeros((f.shape[0], keep.size))
                count = int(keep.sum())
                g[:, np.flatnonzero(keep)] = rows[offset : offset + count].T
                feature_grads.append(g.reshape(f.shape))
                offset += count

            support_omega = np.concatenate([maps[i].omega[maps[i].support] for i in batch])
            coef = self.config.alpha * float(support_omega.mean()) if support_omega.size else 0.0
            return feature_grads, coef, lw

        return hook

    def _fuzzy_step(
        self,
        fuzzy: list[WeightedImage],
        masks: list[Tensor],
        maps: list[ConfidenceMap],
        retained: list[np.ndarray],
        labels: list[np.ndarray],
    ) -> StepFn:
        phase_items = [
            WeightedImage(image=item.image, targets=item.targets, weights=conf.omega * weight)
            for item, conf, weight in zip(fuzzy, maps, masks)
        ]
        use_alignment = self.config.use_alignment and any(g.usable for g in self.calibrator.targets)

        fuzzy_masks = [item.weights for item in fuzzy]

        def step(params: ModelParams, batch: npt.NDArray[np.int64]) -> tuple[float, list[Tensor], float]:
            hook = self._alignment_hook(batch, fuzzy_masks, retained, maps, labels) if use_alignment else None
            value, grads, logits, lw = objective(params, [phase_items[i] for i in batch], self.config.dice_loss, hook)

            ce = np.concatenate([ce_map(lg, phase_items[i].targets).reshape(-1) for lg, i in zip(logits, batch)])
            omega = np.concatenate([maps[i].omega.reshape(-1) for i in batch])
            mask = np.concatenate([masks[i].reshape(-1) for i in batch])
            support = np.concatenate([maps[i].support.reshape(-1) for i in batch])
            reported = fuzzy_loss(ce, omega, mask, lw, self.config.alpha, support)
            return (value if self.config.dice_loss else reported), grads, lw

        return step

    def iteration(self, state: TrainState, dataset: Dataset) -> TrainState:
        config = self.config
        t = state.t + 1
        train = dataset.split(Split.TRAIN)
        labels = [s.label for s in train]
        budget = DaleBudget.per_iteration(len(train), config.batch_size, config.phase_epochs)

        regions = self.partitioner.split_all(train, recompute=config.recompute_masks)
        nonfuzzy, fuzzy = region_sets(regions, config.classes, config.literal_masks)
        phase_masks = [np.ones(s.shape) if config.literal_masks else r.masks.fuzzy for s, r in zip(train, regions)]

        # non-fuzzy phase, warm-started from the previous fuzzy result
        theta_in = parameter_checksum(state.params)
        theta_n, adam, loss_n, _, _ = self._run_phase(
            Phase.NONFUZZY,
            state.params,
            state.adam,
            len(train),
            config.phase_epochs,
            self.rng.split("nonfuzzy", t),
            budget,
            self._plain_step(nonfuzzy),
        )
        steps = state.steps + budget.spent[Phase.NONFUZZY]
        rows = [self._row(t, Phase.NONFUZZY, loss_n, theta_n, dataset, steps, theta_in)]
        theta_n_sum = rows[0]["theta_out"]

        fuzzy_weight = sum(float(item.weights.sum()) for item in fuzzy)
        omegas: tuple[ConfidenceMap | None, ...] = state.omegas
        extra: dict[str, Any] = {}

        if fuzzy_weight == 0.0:
            logger.warning("%s; fuzzy phase steps go to the non-fuzzy set", EmptyRegionSet(f"fuzzy t={t}"))
            params, adam, loss_f, _, _ = self._run_phase(
                Phase.FUZZY,
                theta_n,
                adam,
                len(train),
                config.phase_epochs,
                self.rng.split("fuzzy", t),
                budget,
                self._plain_step(nonfuzzy),
            )
        else:
            if config.use_alignment:
                stats_items = nonfuzzy_stats_items(regions, nonfuzzy, config.literal_masks)
                self._nonfuzzy_targets(theta_n, stats_items, labels, t)

            maps = self.estimate_confidence(t, theta_n, fuzzy, nonfuzzy, state.omegas)
            retained = [self.confidence.retained(conf) for conf in maps]
            extra.update(self._omega_diagnostics(maps, retained, train))
            omegas = tuple(maps)

            params, adam, loss_f, lw, _ = self._run_phase(
                Phase.FUZZY,
                theta_n,
                adam,
                len(train),
                config.phase_epochs,
                self.rng.split("fuzzy", t),
                budget,
                self._fuzzy_step(fuzzy, phase_masks, maps, retained, labels),
            )
            extra["L_W"] = lw if config.use_alignment else NAN

            if self.run_log is not None:
                if config.save_omega:
                    for i, conf in enumerate(maps):
                        self.run_log.write_omega(t, i, conf.omega)
                if config.dump_calib:
                    self.run_log.write_calib(t, self.calibrator.dump(t, extra["L_W"]))

        steps = state.steps + budget.settle()
        rows.append(self._row(t, Phase.FUZZY, loss_f, params, dataset, steps, theta_n_sum, extra))
        return TrainState(
            params=params, adam=adam, t=t, steps=steps, omegas=omegas, history=state.history + tuple(rows)
        )


def nonfuzzy_stats_items(
    regions: list[RegionSample], nonfuzzy: list[WeightedImage], literal: bool
) -> list[WeightedImage]:
    """Inputs for the frozen non-fuzzy Gaussians: weights are always the M_n mask."""
    if not literal:
        return nonfuzzy
    return [
        WeightedImage(image=item.image, targets=item.targets, weights=r.masks.nonfuzzy)
        for item, r in zip(nonfuzzy, regions)
    ]


def initial_state(config: RunConfig, channels: int = 1) -> TrainState:
    params = init(config.seed, d=config.d, classes=config.classes, channels=channels, hidden=config.hidden)
    return TrainState(params=params, adam=AdamState.zeros_like(params, lr=config.lr))


def checkpoint_payload(state: TrainState, config: RunConfig) -> tuple[dict[str, Tensor], dict[str, Any]]:
    tensors, meta = pack_model(state.params, state.adam)
    stored = []
    for i, conf in enumerate(state.omegas):
        if conf is not None:
            tensors[f"omega.{i}"] = conf.omega
            stored.append(i)
    meta.update(
        {"t": state.t, "steps": state.steps, "config": config.to_dict(), "omegas": stored, "size": len(state.omegas)}
    )
    return tensors, meta


def restore_state(path: Path, config: RunConfig) -> TrainState:
    tensors, meta = load_checkpoint(path)
    params, adam = unpack_model(tensors, meta)
    settings = config.omega_settings()

    omegas: list[ConfidenceMap | None] = [None] * int(meta.get("size", 0))
    for i in meta.get("omegas", []):
        omega = tensors[f"omega.{i}"]
        empty = np.zeros(omega.shape, dtype=bool)
        omegas[i] = ConfidenceMap(
            omega=omega, eta=settings.eta, omega_max=settings.omega_max, support=empty, evaluated=empty
        )

    logger.info("resume t=%d steps=%d path=%s", meta["t"], meta["steps"], path)
    return TrainState(
        params=params,
        adam=adam if adam is not None else AdamState.zeros_like(params, lr=config.lr),
        t=int(meta["t"]),
        steps=int(meta["steps"]),
        omegas=tuple(omegas),
    )


def run(
    config: RunConfig,
    dataset: Dataset,
    arm: TrainingArmInterface,
    run_log: RunLog | None = None,
    state: TrainState | None = None,
) -> TrainState:
    """Iterate ``arm`` up to ``config.T``, logging rows and checkpoints after every iteration."""
    state = state or initial_state(config, dataset.manifest.channels)
    logger.info("run arm=%s from_t=%d T=%d seed=%d", arm.name, state.t, config.T, config.seed)

    while state.t < config.T:
        logged = len(state.history)
        state = arm.iteration(state, dataset)
        if run_log is not None:
            for row in state.history[logged:]:
                run_log.append(row)
            tensors, meta = checkpoint_payload(state, config)
            run_log.write_checkpoint(state.t, tensors, meta)

    return state


def dale_iteration(state: TrainState, dataset: Dataset, config: RunConfig) -> TrainState:
    return DaleArm(
        config,
        Partitioner(config=config.partition_settings()),
        ConfidenceEstimator(config=config.omega_settings()),
        Calibrator(config=config.calib_config()),
    ).iteration(state, dataset)


def baseline_iteration(state: TrainState, dataset: Dataset, config: RunConfig) -> TrainState:
    return BaselineArm(config).iteration(state, dataset)
