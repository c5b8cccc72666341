"""Error types raised by the trainer."""


class TrainerError(Exception):
    """Base class for all trainer errors."""


class SchemaError(TrainerError):
    """A dataset line does not match the expected record schema.

    The message always starts with "<path>:<lineno>:" so the offending
    line can be found directly.
    """


class ManifestError(TrainerError):
    """The training manifest is missing, malformed, or inconsistent."""


class TargetNotFound(TrainerError):
    """The model has no weight matrix matching a named adapter target."""


class NonFiniteLoss(TrainerError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, step: int, micro_batch: int, value: float):
        self.step = step
        self.micro_batch = micro_batch
        self.value = value
        super().__init__(
            f"non-finite loss {value!r} at optimizer step {step}, "
            f"micro-batch {micro_batch}; aborting without saving adapters"
        )
