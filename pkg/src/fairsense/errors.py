"""Exception hierarchy shared across the toolkit.

Each error family maps to a distinct CLI exit code so scripted callers
can tell schema problems from data problems from training divergence.
"""


class FairsenseError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class DimensionError(FairsenseError):
    """Operand shapes do not conform for an operation."""


class NumericOverflowError(FairsenseError):
    """A forward operation produced a non-finite value."""


class TapeError(FairsenseError):
    """Backward-pass contract violation (non-scalar output, consumed tape)."""


class AuditSetupError(FairsenseError):
    """A tensor required for an audit was never recorded on the tape."""


class SpecError(FairsenseError):
    """Invalid model specification."""


class ModelLoadError(FairsenseError):
    """Base for model/dataset file loading failures."""


class VersionError(ModelLoadError):
    """File carries an unknown format version."""


class ShapeMismatchError(ModelLoadError):
    """Stored weights do not match the shapes implied by the spec."""


class CorruptFileError(ModelLoadError):
    """File is not parseable as the versioned text format."""


class LabelError(FairsenseError):
    """A label was outside {0, 1}."""


class TrainingInvariantError(FairsenseError):
    """A trainable weight was missing its gradient during an update."""


class DivergenceError(FairsenseError):
    """Training loss became non-finite."""

    exit_code = 5


class ConfigError(FairsenseError):
    """Invalid audit/training configuration."""

    exit_code = 4


class SchemaError(FairsenseError):
    """Dataset schema is inconsistent with itself or with the CSV."""

    exit_code = 2


class DataError(FairsenseError):
    """Dataset content problem (empty after cleaning, bad values)."""

    exit_code = 3


class StatsMismatchError(FairsenseError):
    """Normalization stats applied to data from a different schema."""


class GroupCoverageError(FairsenseError):
    """Group metrics need both privileged and unprivileged examples."""


class HarnessError(FairsenseError):
    """Evaluation-harness consistency failure (id mismatch, dim mismatch)."""


class CollisionError(ConfigError):
    """Experiment output directory already holds partial results."""

    exit_code = 6
