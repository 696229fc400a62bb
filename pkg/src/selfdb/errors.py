"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class ScheduleValidityError(ValueError):
    """A noise schedule makes a sampler coefficient non-real."""


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


class FormatError(ValueError):
    """Malformed binary file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncationError(FormatError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"file truncated: expected {expected} bytes, found {actual}", offset=actual)
        self.expected = expected
        self.actual = actual


class ChecksumError(FormatError):
    def __init__(self, stored: int, computed: int, offset: int):
        super().__init__(f"CRC mismatch: stored {stored:#010x}, computed {computed:#010x}", offset)
        self.stored = stored
        self.computed = computed


class DanglingReferenceError(FileNotFoundError):
    """A file refers to another file (e.g. a mask) that cannot be found."""
