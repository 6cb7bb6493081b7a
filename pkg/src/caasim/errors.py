"""Exception types shared across the package."""


class CaasimError(Exception):
    """Base class for all package errors."""


class InvalidShellError(CaasimError, ValueError):
    """Constellation shell specification violates its invariants."""


class NotVisibleError(CaasimError):
    """Requested link geometry puts the satellite below the horizon."""


class OrderingError(CaasimError):
    """Time-ordered input (history push, protocol step, event log) went backwards."""


class InsufficientDataError(CaasimError):
    """Prediction requested from an empty history."""


class CoverageViolationError(CaasimError):
    """A beam assignment references a satellite that does not cover its UE."""


class InfeasibleSwitchError(CaasimError):
    """Handover switch time lies outside the overlap of the two windows."""


class NoInitialCoverageError(CaasimError):
    """No coverage window contains the start of the planning horizon."""


class CoverageGapError(CaasimError):
    """No handover path reaches the end of the horizon.

    Carries the first instant at which coverage is lost.
    """

    def __init__(self, first_uncovered_s: float):
        super().__init__(f"coverage gap starting at t={first_uncovered_s:.3f} s")
        self.first_uncovered_s = first_uncovered_s


class DualInfeasibleError(CaasimError):
    """No pair of vertex-disjoint handover paths exists."""


class ScenarioError(CaasimError, ValueError):
    """Scenario configuration is malformed; message names the offending key path."""

    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}")
        self.key_path = key_path
