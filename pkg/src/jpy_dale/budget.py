"""DALE Step Budget Module.

This module accounts for optimizer steps. Both training arms must spend the
same number of Adam steps per outer iteration so that their metric curves are
comparable per step:

- StepBudget: Per-phase step allowance and bookkeeping
- DaleBudget / BaselineBudget: Allowances of the two training arms

Example:
    ```python
    budget = DaleBudget.per_iteration(train_size=200, batch_size=24, phase_epochs=1)
    budget.charge(Phase.NONFUZZY, 9)
    budget.remaining(Phase.FUZZY)  # -> 9
    ```
"""

import logging
import math

from .enums import Phase
from .errors import TrainingError

logger = logging.getLogger("dale.budget")


def steps_per_epoch(train_size: int, batch_size: int) -> int:
    return math.ceil(train_size / batch_size)


class StepBudget:
    """Step allowance per phase for one outer iteration."""

    def __init__(self, allowance: dict[Phase, int]):
        self.allowance = dict(allowance)
        self.spent: dict[Phase, int] = {phase: 0 for phase in allowance}
        logger.debug("Initialized step budget: %s", {p.value: n for p, n in allowance.items()})

    @property
    def total(self) -> int:
        return sum(self.allowance.values())

    def remaining(self, phase: Phase) -> int:
        return self.allowance[phase] - self.spent[phase]

    def charge(self, phase: Phase, steps: int) -> None:
        if phase not in self.allowance or self.spent[phase] + steps > self.allowance[phase]:
            logger.error("Phase %s would exceed its allowance of %s steps", phase.value, self.allowance.get(phase))
            raise TrainingError(f"{phase.value}: {self.spent.get(phase, 0)} + {steps} > {self.allowance.get(phase)}")
        self.spent[phase] += steps

    def settle(self) -> int:
        """Check every phase spent exactly its allowance; returns the steps spent."""
        for phase, allowed in self.allowance.items():
            if self.spent[phase] != allowed:
                raise TrainingError(f"{phase.value} spent {self.spent[phase]} of {allowed} steps")
        return self.total


class DaleBudget:
    @staticmethod
    def per_iteration(train_size: int, batch_size: int, phase_epochs: int) -> StepBudget:
        steps = phase_epochs * steps_per_epoch(train_size, batch_size)
        return StepBudget({Phase.NONFUZZY: steps, Phase.FUZZY: steps})


class BaselineBudget:
    @staticmethod
    def per_iteration(train_size: int, batch_size: int, phase_epochs: int) -> StepBudget:
        return StepBudget({Phase.BASELINE: 2 * phase_epochs * steps_per_epoch(train_size, batch_size)})
