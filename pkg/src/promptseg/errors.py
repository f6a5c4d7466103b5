"""Exception taxonomy shared across the pipeline.

The CLI maps these onto exit codes, so stage code should raise the most
specific class that applies rather than bare ValueError/RuntimeError.
"""


class PipelineError(Exception):
    """Base class for all promptseg errors."""


class ParameterError(PipelineError):
    """An argument is outside its documented domain (bad stride, tau <= 0, ...)."""


class ConfigError(PipelineError):
    """A resolved experiment configuration is unusable as a whole."""


class DimensionError(PipelineError):
    """Array shapes or lengths do not line up."""


class DataError(PipelineError):
    """Input data violates its contract (labels out of range, bad file payload)."""


class ParseError(DataError):
    """A text input (transcript, vocabulary, config file) failed to parse."""


class VocabularyError(DataError):
    """A gesture index is missing from the active vocabulary."""


class SplitError(DataError):
    """No valid cross-validation fold can be formed."""


class DegenerateInputError(DataError):
    """Numerically degenerate input, e.g. a zero vector fed to cosine similarity."""


class SupportError(DataError):
    """Divergence target has zero mass where the source has positive mass."""


class MetricError(PipelineError):
    """A score is undefined for the given streams (e.g. every frame ignored)."""


class ContractError(PipelineError):
    """An API precondition was violated by the caller."""


class StateError(PipelineError):
    """An object was used after its single-shot lifecycle ended."""


class NonFiniteError(PipelineError):
    """A forward operation produced NaN or Inf from finite inputs."""


class DivergenceError(PipelineError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
