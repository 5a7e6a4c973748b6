"""DALE Trainer Factory Module.

This module provides factory functions for the services a training run is
assembled from. Each takes the ``RunConfig`` and derives the settings of the
service it builds, so every component of a run sees the same knobs.

Example:
    ```python
    config = RunConfig(T=5, seed=3)
    arm = create_arm(config, run_log=RunLog(Path("runs/a")))
    ```
"""

import logging

from .contracts import TrainingArmInterface
from .domain.calib.services import Calibrator
from .domain.confidence.services import ConfidenceEstimator
from .domain.partition.services import Partitioner
from .domain.trainer.logbook import RunLog
from .domain.trainer.models import RunConfig
from .domain.trainer.services import BaselineArm, DaleArm, Evaluator
from .enums import Mode

logger = logging.getLogger("dale.trainer_factory")


def create_partitioner(config: RunConfig) -> Partitioner:
    return Partitioner(config=config.partition_settings())


def create_confidence_estimator(config: RunConfig) -> ConfidenceEstimator:
    return ConfidenceEstimator(config=config.omega_settings())


def create_calibrator(config: RunConfig) -> Calibrator:
    return Calibrator(config=config.calib_config())


def create_evaluator(config: RunConfig) -> Evaluator:
    return Evaluator(config.classes)


def create_arm(
    config: RunConfig,
    run_log: RunLog | None = None,
    partitioner: Partitioner | None = None,
    confidence: ConfidenceEstimator | None = None,
    calibrator: Calibrator | None = None,
    evaluator: Evaluator | None = None,
) -> TrainingArmInterface:
    """Create the training arm named by ``config.mode``.

    Args:
        config (RunConfig): Run configuration
        run_log (RunLog | None): Receives confidence maps and calibration dumps of the DALE arm
        partitioner, confidence, calibrator, evaluator: Optional prebuilt services

    Returns:
        TrainingArmInterface: ``DaleArm`` or ``BaselineArm``
    """
    logger.info("Creating %s arm", config.mode.value)
    evaluator = evaluator or create_evaluator(config)

    if config.mode is Mode.BASELINE:
        return BaselineArm(config, evaluator)

    return DaleArm(
        config,
        partitioner or create_partitioner(config),
        confidence or create_confidence_estimator(config),
        calibrator or create_calibrator(config),
        evaluator,
        run_log,
    )
