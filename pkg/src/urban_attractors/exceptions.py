class DataValidationError(ValueError):
    """Raised when an input file or intermediate table violates its schema or invariants."""
