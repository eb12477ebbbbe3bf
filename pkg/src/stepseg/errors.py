"""Exception types shared across the package."""


class InputError(ValueError):
    """Bad user input: malformed files, out-of-range arguments, shape mismatches."""


class StateError(RuntimeError):
    """Internal invariant breach: inconsistent sampler state or counts."""
