class InvalidParameter(ValueError):
    pass


class SolverError(RuntimeError):
    pass


class InternalInconsistency(RuntimeError):
    """A mathematical guarantee was violated; indicates a bug or bad input."""


class SizeLimitError(ValueError):
    pass


class CheckpointError(IOError):
    pass


class PrecisionInsufficient(ArithmeticError):
    """The certified interval straddles the decision threshold."""


class DegenerateDecomposition(ValueError):
    pass


class DecompositionFileError(ValueError):
    """A decomposition file is malformed or fails its checksum."""
