"""Exception hierarchy for stackdrive.

Every error that can end a command-line run carries the exit code the CLI
reports for it.
"""

from typing import List, Optional


class StackdriveError(Exception):
    """Base class for all stackdrive errors."""

    exit_code = 1


class ConfigError(StackdriveError):
    """Scenario file is missing, malformed or violates an invariant."""

    exit_code = 2

    def __init__(
        self, message: str, line: Optional[int] = None, path: Optional[str] = None
    ):
        """Initialize a config error.

        Args:
            message: What is wrong
            line: 1-based line of the offending node, if known
            path: Scenario file path, if known
        """
        self.message = message
        self.line = line
        self.path = path
        super().__init__(self.render())

    def render(self) -> str:
        """Format as ``path:line: message``."""
        where = self.path or "<config>"
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.message}"


class VerdictFailure(StackdriveError):
    """One or more qualitative experiment checks did not hold."""

    exit_code = 3

    def __init__(self, failed: List[str]):
        self.failed = list(failed)
        super().__init__("failed verdicts: " + ", ".join(self.failed))


class NumericalAbort(StackdriveError):
    """Integration produced a non-finite state."""

    exit_code = 4

    def __init__(
        self,
        message: str,
        time: Optional[float] = None,
        vehicle_id: Optional[int] = None,
    ):
        self.time = time
        self.vehicle_id = vehicle_id
        detail = message
        if vehicle_id is not None:
            detail += f" (vehicle {vehicle_id}"
            detail += f", t={time:.2f} s)" if time is not None else ")"
        super().__init__(detail)


class LowSpeedError(ValueError):
    """Lateral model evaluated below the low-speed floor."""
