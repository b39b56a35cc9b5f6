"""Exception hierarchy shared by the simulator modules."""


class MCFError(Exception):
    """Base class for all simulator errors."""


class DomainError(MCFError, ValueError):
    """A query point or argument lies outside the valid domain."""


class OverlapViolation(MCFError):
    """The two patches no longer overlap as required; a regrid is needed."""


class GeometryError(MCFError):
    """Sampled data does not have the shape a root search relies on."""


class RegridError(MCFError):
    """A requested regrid cannot be covered by the old patch pair."""


class SingularityReached(MCFError):
    """A radius fell to the singular floor."""


class NumericalBlowup(MCFError):
    """A NaN or Inf appeared in the evolved fields."""

    def __init__(self, patch: str, index: tuple[int, int], t: float):
        self.patch = patch
        self.index = index
        self.t = t
        super().__init__(f"non-finite value in {patch} patch at node {index} (t={t:.17g})")


class IntegrationError(MCFError):
    """The bowl-soliton ODE integration misbehaved."""


class UnsupportedCase(MCFError, ValueError):
    """Parameters fall into a case this simulator does not handle."""


class FitRejected(MCFError):
    """Blowup-fit input is unusable (too short, non-monotone)."""


class ConfigError(MCFError, ValueError):
    """Invalid run configuration text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
