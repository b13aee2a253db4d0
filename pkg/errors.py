"""Exception hierarchy shared by the library and the CLI.

Every error carries a stable ``reason`` code (written to logs and to stderr by
the CLI) and the process exit code the CLI maps it to.
"""

from __future__ import annotations


class LeafkitError(Exception):
    reason = "error"
    exit_code = 2

    def __init__(self, message: str = ""):
        super().__init__(message or self.reason)
        self.message = message or self.reason


class InvalidOperator(LeafkitError):
    reason = "invalid_operator"
    exit_code = 1


class InvalidParameter(LeafkitError):
    reason = "invalid_parameter"
    exit_code = 1


class DomainError(LeafkitError):
    reason = "domain_error"


class NumericalError(LeafkitError):
    reason = "numerical_error"


class RankDeficient(LeafkitError):
    reason = "rank_deficient"


class DegenerateStateHamiltonian(LeafkitError):
    reason = "degenerate_state_hamiltonian"


class EmptyShell(LeafkitError):
    reason = "empty_shell"


class ConfigError(LeafkitError):
    reason = "config_error"
    exit_code = 1

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ArtifactIOError(LeafkitError):
    reason = "io_error"
    exit_code = 3

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
