import logging
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Generic, TypeVar

if TYPE_CHECKING:
    from jpy_dale.domain.dataio.models import Dataset
    from jpy_dale.domain.trainer.models import TrainState

logger = logging.getLogger("dale.contracts")

TConfig = TypeVar("TConfig")


class ServiceInterface(ABC, Generic[TConfig]):
    def __init__(self, *, config: TConfig):
        self._config: TConfig = config

    @property
    @abstractmethod
    def config(self) -> TConfig: ...


class TrainingArmInterface(ABC):
    @property
    @abstractmethod
    def name(self) -> str: ...

    @abstractmethod
    def steps_per_iteration(self, train_size: int) -> int: ...

    @abstractmethod
    def iteration(
        self,
        state: "TrainState",
        dataset: "Dataset",
    ) -> "TrainState": ...
