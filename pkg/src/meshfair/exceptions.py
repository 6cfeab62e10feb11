"""Exception hierarchy shared by all meshfair modules."""


class MeshfairError(Exception):
    """Base class for package errors."""


class DomainError(MeshfairError, ValueError):
    """An argument lies outside the mathematical domain of a model function."""


class ScenarioError(MeshfairError, ValueError):
    """A scenario file or topology is malformed or references unknown entities."""


class SolverError(MeshfairError, RuntimeError):
    """A numerical solve failed. ``program`` carries the offending input when known."""

    def __init__(self, message, program=None, certificate=None):
        super().__init__(message)
        self.program = program
        self.certificate = certificate


class InfeasibleTopologyError(SolverError):
    """No allocation with strictly positive flow rates exists."""
