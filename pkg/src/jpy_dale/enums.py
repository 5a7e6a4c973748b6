"""DALE Enumerations.

This module contains the enumeration classes used throughout jpy-dale. These
enums provide type-safe constants for training arms, dataset splits, training
phases, configuration modes and autodiff operation kinds.

Example:
    ```python
    from jpy_dale.enums import Mode, Split

    mode = Mode.DALE
    split = Split.TEST
    ```
"""

from enum import Enum


class Mode(Enum):
    """Training arm selected by a run.

    Attributes:
        DALE: Alternating non-fuzzy / fuzzy training with confidence and alignment
        BASELINE: Paradigm-free training on unpartitioned data with unit weights
    """

    DALE = "dale"
    BASELINE = "baseline"


class Split(Enum):
    """Dataset split tags stored in the manifest."""

    TRAIN = "train"
    TEST = "test"


class Phase(Enum):
    """Training phase recorded in every metrics row.

    Attributes:
        NONFUZZY: Mask-weighted training on the non-fuzzy region set
        FUZZY: Confidence-weighted training with alignment on the fuzzy region set
        BASELINE: One baseline iteration
    """

    NONFUZZY = "nonfuzzy"
    FUZZY = "fuzzy"
    BASELINE = "baseline"


class OmegaInit(Enum):
    """Initial value of the per-pixel label confidence.

    Attributes:
        ONES: omega starts at 1 everywhere
        ETA: omega starts at the omega step size
    """

    ONES = "ones"
    ETA = "eta"


class NoiseModel(Enum):
    """Where label noise is injected.

    Attributes:
        BAND: Flip pixels inside a band around the clean label boundary
        UNIFORM: Flip pixels anywhere in the image
    """

    BAND = "band"
    UNIFORM = "uniform"


class Region(Enum):
    """Region set a view is taken from."""

    FUZZY = "fuzzy"
    NONFUZZY = "nonfuzzy"


class OpKind(Enum):
    """Operation kinds recorded on an autodiff graph."""

    PARAMETER = "parameter"
    CONSTANT = "constant"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    MATMUL = "matmul"
    CONV2D = "conv2d"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    LOG = "log"
    SUM = "sum"
    MEAN = "mean"
    WEIGHT = "weight"
