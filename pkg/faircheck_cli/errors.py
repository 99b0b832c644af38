"""Exception hierarchy. Every error carries the CLI exit code it maps to."""

from typing import Optional


class FaircheckError(Exception):
    """Base class for all faircheck errors."""

    exit_code = 1


class ConfigError(FaircheckError):
    """Invalid or unreadable dataset/experiment configuration."""


class ParseError(FaircheckError):
    """Malformed input file."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpecError(FaircheckError):
    """A preprocessing transform cannot be applied."""

    def __init__(self, message: str, index: int):
        self.index = index
        super().__init__(f"transform #{index}: {message}")


class ArgumentError(FaircheckError, ValueError):
    """An argument is outside its allowed range."""


class UndefinedMetricError(FaircheckError):
    """A fairness index or rate has an empty conditioning cell."""

    exit_code = 2

    def __init__(self, message: str, cell: str):
        self.cell = cell
        super().__init__(f"{message} (empty cell: {cell})")


class DegenerateVarianceError(FaircheckError):
    """A plug-in probability is zero, so the Delta-method variance is undefined."""

    exit_code = 2


class BootstrapInstabilityError(FaircheckError):
    """Too many bootstrap replicates had an undefined statistic."""

    exit_code = 2

    def __init__(self, n_undefined: int, n_replicates: int):
        self.n_undefined = n_undefined
        self.n_replicates = n_replicates
        super().__init__(
            f"{n_undefined}/{n_replicates} bootstrap replicates have an undefined statistic"
        )


class DegenerateTrainingError(FaircheckError):
    """Training data cannot fit a model (for instance a single class)."""

    exit_code = 3
