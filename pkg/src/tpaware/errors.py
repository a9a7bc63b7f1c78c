class InvalidArgument(ValueError):
    """Raised when an input violates an operation's preconditions."""


class ProtocolViolation(RuntimeError):
    """Raised when ranks disagree about which collective they are in, or on payload shape."""
