import logging
from pathlib import Path

from .contracts import TrainingArmInterface
from .domain.calib.services import Calibrator
from .domain.confidence.models import ConfidenceMap
from .domain.confidence.services import ConfidenceEstimator
from .domain.dataio.models import Dataset, Sample
from .domain.metrics.models import MetricRow
from .domain.partition.models import RegionSample
from .domain.partition.services import Partitioner
from .domain.segmodel.models import ModelParams
from .domain.trainer.logbook import RunLog
from .domain.trainer.models import RunConfig, TrainState
from .domain.trainer.services import DaleArm, Evaluator, region_sets, restore_state, run
from .enums import Split
from .errors import BadRange
from .trainer_factory import (
    create_arm,
    create_calibrator,
    create_confidence_estimator,
    create_evaluator,
    create_partitioner,
)

logger = logging.getLogger("dale.dale")


class Dale:
    """Entry point of the library.

    Holds one ``RunConfig`` and hands out the services built from it. Services
    are created on first access and shared afterwards, so the partition cache
    and the frozen calibration targets survive across calls.

    Args:
        config (RunConfig): Run configuration.
        out_dir (Path | None): Run directory for metrics, maps and checkpoints; nothing is written without it.
    """

    def __init__(self, config: RunConfig, out_dir: Path | None = None):
        self.__config = config
        self.__out_dir = out_dir

        self.__partitioner: Partitioner | None = None
        self.__confidence: ConfidenceEstimator | None = None
        self.__calibrator: Calibrator | None = None
        self.__evaluator: Evaluator | None = None
        self.__run_log: RunLog | None = None
        self.__arm: TrainingArmInterface | None = None
        self.__resumed = False

    @property
    def config(self) -> RunConfig:
        return self.__config

    @property
    def partitioner(self) -> Partitioner:
        if self.__partitioner is None:
            self.__partitioner = create_partitioner(self.__config)

        return self.__partitioner

    @property
    def confidence(self) -> ConfidenceEstimator:
        if self.__confidence is None:
            self.__confidence = create_confidence_estimator(self.__config)

        return self.__confidence

    @property
    def calibrator(self) -> Calibrator:
        if self.__calibrator is None:
            self.__calibrator = create_calibrator(self.__config)

        return self.__calibrator

    @property
    def evaluator(self) -> Evaluator:
        if self.__evaluator is None:
            self.__evaluator = create_evaluator(self.__config)

        return self.__evaluator

    @property
    def run_log(self) -> RunLog | None:
        """Run directory writer; appends to an existing ``metrics.csv`` when resuming."""
        if self.__run_log is None and self.__out_dir is not None:
            self.__run_log = RunLog(self.__out_dir, append=self.__resumed)

        return self.__run_log

    @property
    def arm(self) -> TrainingArmInterface:
        if self.__arm is None:
            self.__arm = create_arm(
                self.__config,
                run_log=self.run_log,
                partitioner=self.partitioner,
                confidence=self.confidence,
                calibrator=self.calibrator,
                evaluator=self.evaluator,
            )

        return self.__arm

    def train(self, dataset: Dataset, resume: Path | None = None) -> TrainState:
        """Run the configured arm up to ``config.T``, optionally continuing a checkpoint."""
        state = None
        if resume is not None:
            self.__resumed = True
            state = restore_state(resume, self.__config)

        return run(self.__config, dataset, self.arm, self.run_log, state)

    def evaluate(self, params: ModelParams, dataset: Dataset, split: Split = Split.TEST) -> MetricRow:
        return Evaluator(self.__config.classes, split).evaluate(params, dataset)

    def partition(self, samples: list[Sample]) -> list[RegionSample]:
        return self.partitioner.split_all(samples)

    def inspect_omega(
        self,
        params: ModelParams,
        dataset: Dataset,
        indices: list[int] | None = None,
        previous: tuple[ConfidenceMap | None, ...] = (),
        t: int = 0,
    ) -> dict[int, ConfidenceMap]:
        """Run the confidence loop at ``params`` for selected training images.

        Args:
            params (ModelParams): Parameters treated as the non-fuzzy-phase result
            dataset (Dataset): Dataset whose train split is inspected
            indices (list[int] | None): Training image indices; all when None
            previous (tuple): Stored confidence maps to warm-start from
            t (int): Iteration index keying the random streams

        Returns:
            dict[int, ConfidenceMap]: Confidence map per inspected index
        """
        train = dataset.split(Split.TRAIN)
        selected = list(range(len(train))) if indices is None else indices
        for i in selected:
            if not 0 <= i < len(train):
                raise BadRange(f"image {i} outside train split of {len(train)}")

        regions = self.partitioner.split_all(train)
        nonfuzzy, fuzzy = region_sets(regions, self.__config.classes, self.__config.literal_masks)
        arm = DaleArm(
            self.__config,
            self.partitioner,
            self.confidence,
            self.calibrator,
            self.evaluator,
        )

        maps = arm.estimate_confidence(
            t,
            params,
            [fuzzy[i] for i in selected],
            nonfuzzy,
            tuple(previous[i] if i < len(previous) else None for i in selected),
        )
        logger.info("inspected %d images at t=%d", len(selected), t)
        return dict(zip(selected, maps))

    def close(self) -> None:
        if self.__run_log is not None:
            self.__run_log.close()
