"""Exception types shared across the package."""


class MixcompError(Exception):
    """Base class for all package-specific errors."""


class ContractError(MixcompError, ValueError):
    """A caller violated an operation's precondition (bad index, shape mismatch)."""


class DomainError(ContractError):
    """A parameter or argument lies outside a kernel's domain."""


class CsvParseError(MixcompError, ValueError):
    """Malformed input CSV; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(MixcompError, ValueError):
    """Invalid configuration file; carries every problem found, not just the first."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class NumericalError(MixcompError, ArithmeticError):
    """Non-finite objective or gradient during optimization.

    Carries the iteration at which the evaluation failed and the parameter
    block holding the first offending component ("objective" when only the
    objective value itself was non-finite).
    """

    def __init__(self, iteration: int, block: str, message: str = ""):
        detail = f" ({message})" if message else ""
        super().__init__(f"non-finite value at iteration {iteration}, block '{block}'{detail}")
        self.iteration = iteration
        self.block = block


class GenerationError(MixcompError, RuntimeError):
    """Synthetic-data generation could not satisfy its constraints."""
