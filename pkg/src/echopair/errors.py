"""Exception and warning types shared across the package."""

from __future__ import annotations


class EchopairError(Exception):
    """Base class for all domain errors raised by this package."""


class ConfigError(EchopairError):
    """A configuration document could not be turned into parameters."""


class MissingKey(ConfigError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing required config key: {name!r}")


class NegativeValue(ConfigError):
    def __init__(self, name: str, value: float):
        self.name = name
        self.value = value
        super().__init__(f"config key {name!r} must be non-negative, got {value!r}")


class UnitUnknown(ConfigError):
    def __init__(self, name: str, unit: str):
        self.name = name
        self.unit = unit
        super().__init__(f"config key {name!r} carries unknown or incompatible unit {unit!r}")


class InvariantViolation(EchopairError):
    """A constructed object violates one of its structural invariants."""


class OrderingViolation(InvariantViolation):
    """Pulse-sequence instants are not ordered as the protocol requires."""

    def __init__(self, constraint: str):
        self.constraint = constraint
        super().__init__(f"timing ordering violated: {constraint}")


class FrequencyInconsistency(EchopairError):
    """Supplied transition frequencies do not close the four-level diagram."""


class NonpositiveLogArgument(EchopairError):
    """d_se <= 2 p_S tau: the nonclassicality threshold admits no region."""


class ThresholdOrder(EchopairError):
    """Forbid threshold must lie strictly below the allow threshold."""


class QuadratureDivergence(EchopairError):
    """Doubling the quadrature nodes changed the result beyond tolerance."""


class OutputIOError(EchopairError):
    """An output file or manifest could not be written."""


class VerificationFailure(EchopairError):
    """One or more oracle-vs-analytic checks exceeded tolerance."""

    def __init__(self, failing: list[str]):
        self.failing = failing
        super().__init__("verification failed for: " + ", ".join(failing))


class LowDepthWarning(UserWarning):
    """A low-optical-depth expansion is being used outside its validity range."""


class PulseAreaWarning(UserWarning):
    """Write-pulse area is large enough that leading-order formulas degrade."""
