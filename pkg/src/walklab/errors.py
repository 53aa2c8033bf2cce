"""Exception types shared across walklab modules."""


class WalklabError(Exception):
    """Base class for all walklab errors."""


class BackendMismatchError(WalklabError):
    """An element or measure does not belong to the group backend it was used with."""


class ElementParseError(WalklabError):
    """Element text does not match the backend grammar."""

    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} (at position {pos} in {text!r})")
        self.text = text
        self.pos = pos


class MeasureError(WalklabError):
    """A measure violates its invariants (negative weight, mass > 1, empty support)."""


class CapExceededError(WalklabError):
    """A support set, ball, or lattice window grew past the configured cap.

    ``partial`` holds whatever prefix of the computation completed, and
    ``n_reached`` the last fully computed step.
    """

    def __init__(self, message: str, n_reached: int = 0, partial=None):
        super().__init__(message)
        self.n_reached = n_reached
        self.partial = partial


class LabelConflictError(WalklabError):
    """Coset labeling hit two inconsistent labels for one element.

    This contradicts periodicity of an irreducible walk, so it signals a wrong
    period or non-irreducible input rather than a recoverable condition.
    """


class StabilizationError(WalklabError):
    """An iterative closure did not stabilize within its budget; ``partial`` holds the set so far."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class ConvergenceError(WalklabError):
    """An iterative numeric routine failed to reach its tolerance."""


class InsufficientDataError(WalklabError):
    """Not enough usable sequence points for the requested estimate."""
