"""Exception hierarchy shared across the workbench.

Two broad classes matter for the CLI exit-code contract: user input
problems (bad files, bad arguments) exit 1, environment/endpoint problems
(unreachable or misbehaving model servers) exit 2.
"""

from __future__ import annotations


class WorkbenchError(Exception):
    """Base class for all workbench errors."""


class UserInputError(WorkbenchError):
    """Invalid input supplied by the caller (file contents, arguments)."""


class EndpointError(WorkbenchError):
    """A model endpoint or the surrounding environment misbehaved."""
