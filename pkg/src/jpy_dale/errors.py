"""DALE Error Classes.

This module contains all error classes used in jpy-dale. These errors are raised
when numerical routines, file formats, data validation or the command line detect
a condition they cannot handle. Each error class carries a short error code, the
process exit code the CLI maps it to, and a descriptive message.

The error hierarchy is organized as follows:
- DaleException (base class)
  - NumericError
  - DataError
  - PartitionError
  - ModelError
  - TrainingError
  - UsageError
"""


class DaleException(Exception):
    """Base exception class for all jpy-dale errors.

    Attributes:
        ERROR_CODE (str): Short jpy-dale error code.
        EXIT_CODE (int): Process exit code used by the command line.
        MESSAGE (str): A short, user-friendly error message.
        DESCRIPTION (str): A detailed description of the error.
    """

    ERROR_CODE: str | None = None
    EXIT_CODE: int = 2
    MESSAGE: str | None = None
    DESCRIPTION: str | None = None

    def __init__(self, detail: str | None = None) -> None:
        super().__init__(detail)
        self.detail = detail

    def __str__(self) -> str:
        text = f"{self.MESSAGE} (DALE Error {self.ERROR_CODE})"
        if self.detail:
            return f"{text}: {self.detail}"
        return text


# Numeric Errors
class NumericError(DaleException):
    """Base class for failures inside numkit routines."""

    ERROR_CODE: str | None = "N00"
    MESSAGE: str | None = "Numeric error"
    DESCRIPTION: str | None = "A numerical routine could not complete."


class NonSymmetric(NumericError):
    ERROR_CODE: str | None = "N01"
    MESSAGE: str | None = "Matrix is not symmetric"
    DESCRIPTION: str | None = "The routine requires a symmetric matrix within tolerance 1e-9."


class NonConvergent(NumericError):
    ERROR_CODE: str | None = "N02"
    MESSAGE: str | None = "Iteration did not converge"
    DESCRIPTION: str | None = "The Jacobi eigensolver exceeded its sweep cap."


class NotPositiveSemidefinite(NumericError):
    ERROR_CODE: str | None = "N03"
    MESSAGE: str | None = "Matrix is not positive semidefinite"
    DESCRIPTION: str | None = "An eigenvalue is below the clamping tolerance."


class NonFiniteValue(NumericError):
    """Raised when an operation produces NaN or Inf.

    Non-finite values are never allowed to propagate silently through a graph
    or a file.
    """

    ERROR_CODE: str | None = "N04"
    MESSAGE: str | None = "Non-finite value"
    DESCRIPTION: str | None = "An operation produced NaN or Inf."


class NotScalarLoss(NumericError):
    ERROR_CODE: str | None = "N05"
    MESSAGE: str | None = "Loss node is not scalar"
    DESCRIPTION: str | None = "Reverse accumulation starts from a scalar node only."


class DetachedNode(NumericError):
    ERROR_CODE: str | None = "N06"
    MESSAGE: str | None = "Node does not belong to this graph"
    DESCRIPTION: str | None = "Gradients can only be taken with respect to nodes recorded on the same graph."


class BadRange(NumericError):
    ERROR_CODE: str | None = "N07"
    MESSAGE: str | None = "Value out of range"
    DESCRIPTION: str | None = "A numeric argument is outside its admissible range."


class ShapeMismatch(NumericError):
    ERROR_CODE: str | None = "N08"
    MESSAGE: str | None = "Shape mismatch"
    DESCRIPTION: str | None = "Tensor shapes do not agree."


# Data Errors
class DataError(DaleException):
    ERROR_CODE: str | None = "D00"
    MESSAGE: str | None = "Data error"
    DESCRIPTION: str | None = "A dataset or file could not be produced or parsed."


class BadDims(DataError):
    ERROR_CODE: str | None = "D01"
    MESSAGE: str | None = "Bad image dimensions"
    DESCRIPTION: str | None = "Synthetic images must be between 8 and 256 pixels per side."


class BadMagic(DataError):
    ERROR_CODE: str | None = "D02"
    MESSAGE: str | None = "Bad file magic"
    DESCRIPTION: str | None = "The file does not start with the expected signature."


class TruncatedFile(DataError):
    ERROR_CODE: str | None = "D03"
    MESSAGE: str | None = "Truncated file"
    DESCRIPTION: str | None = "The file payload is shorter than its header announces."


class BadMaxval(DataError):
    ERROR_CODE: str | None = "D04"
    MESSAGE: str | None = "Unsupported PGM maxval"
    DESCRIPTION: str | None = "Only 8-bit PGM files with maxval 255 are supported."


class MissingFile(DataError):
    ERROR_CODE: str | None = "D05"
    MESSAGE: str | None = "Referenced file is missing"
    DESCRIPTION: str | None = "A manifest entry points at a file that does not exist."


class EmptySplit(DataError):
    ERROR_CODE: str | None = "D06"
    MESSAGE: str | None = "Split is empty"
    DESCRIPTION: str | None = "The requested dataset split contains no samples."


class BadManifest(DataError):
    ERROR_CODE: str | None = "D07"
    MESSAGE: str | None = "Malformed manifest"
    DESCRIPTION: str | None = "manifest.json is not valid JSON or lacks a required field."


# Partition Errors
class PartitionError(DaleException):
    ERROR_CODE: str | None = "P00"
    MESSAGE: str | None = "Partition error"
    DESCRIPTION: str | None = "Region partitioning failed."


class EmptyPatch(PartitionError):
    ERROR_CODE: str | None = "P01"
    MESSAGE: str | None = "Empty patch"
    DESCRIPTION: str | None = "Average entropy is undefined on a patch without pixels."


class BadPatchSize(PartitionError):
    ERROR_CODE: str | None = "P02"
    MESSAGE: str | None = "Bad patch size"
    DESCRIPTION: str | None = "Patch sides must be positive and no larger than the image."


# Model Errors
class ModelError(DaleException):
    ERROR_CODE: str | None = "M00"
    MESSAGE: str | None = "Model error"
    DESCRIPTION: str | None = "Confidence or calibration state is unusable."


class UninitializedGradient(ModelError):
    ERROR_CODE: str | None = "M01"
    MESSAGE: str | None = "Meta-gradient not populated"
    DESCRIPTION: str | None = "The noise indicator needs a confidence map with a computed meta-gradient."


class DegenerateClass(ModelError):
    ERROR_CODE: str | None = "M02"
    MESSAGE: str | None = "Degenerate class statistics"
    DESCRIPTION: str | None = "A class has fewer pixels than the usable-estimate floor."


# Training Errors
class TrainingError(DaleException):
    ERROR_CODE: str | None = "T00"
    MESSAGE: str | None = "Training error"
    DESCRIPTION: str | None = "The training loop could not proceed."


class EmptyRegionSet(TrainingError):
    ERROR_CODE: str | None = "T01"
    MESSAGE: str | None = "Region set has zero total weight"
    DESCRIPTION: str | None = "A training phase found no mask weight to learn from."


class ConfigError(TrainingError):
    ERROR_CODE: str | None = "T02"
    MESSAGE: str | None = "Invalid configuration"
    DESCRIPTION: str | None = "A configuration key is unknown or its value is out of range."


# Usage Errors
class UsageError(DaleException):
    ERROR_CODE: str | None = "U00"
    EXIT_CODE: int = 1
    MESSAGE: str | None = "Usage error"
    DESCRIPTION: str | None = "The command line could not be parsed."


class UnknownCommand(UsageError):
    ERROR_CODE: str | None = "U01"
    MESSAGE: str | None = "Unknown command or flag"
    DESCRIPTION: str | None = "See --help for the supported subcommands and flags."


class OutputDirectoryNotEmpty(UsageError):
    ERROR_CODE: str | None = "U02"
    MESSAGE: str | None = "Output directory is not empty"
    DESCRIPTION: str | None = "Pass --force to write into an existing non-empty directory."
