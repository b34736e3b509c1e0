"""Exception hierarchy."""


class ZplLabError(Exception):
    pass


class DomainError(ZplLabError, ValueError):
    """A physical parameter outside its valid domain."""


class ConfigurationError(ZplLabError, ValueError):
    pass


class UnorderedStreamError(ZplLabError, ValueError):
    pass


class FitError(ZplLabError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SearchError(ZplLabError, RuntimeError):
    pass


class TimeTagFormatError(ZplLabError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ScenarioError(ZplLabError, ValueError):
    pass


class ScenarioParseError(ScenarioError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class ScenarioValidationError(ScenarioError):
    pass


class MissingSeedError(ScenarioError):
    pass


class RunError(ZplLabError, RuntimeError):
    """A measurement failed; ``report_path`` points at the partial report."""

    def __init__(self, message, report_path=None):
        super().__init__(message)
        self.report_path = report_path
