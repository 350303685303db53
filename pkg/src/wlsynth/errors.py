class EvaluationError(RuntimeError):
    """A backend could not produce metrics for a kernel."""

    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class StatsError(EvaluationError):
    """A stats dump is missing a mapped key or holds an unparseable value."""


class ConfigError(ValueError):
    """Invalid run configuration."""
