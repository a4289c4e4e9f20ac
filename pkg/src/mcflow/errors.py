"""Exception types shared across the package."""


class McflowError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameter(McflowError):
    pass


class InvalidTime(McflowError):
    pass


class DomainError(McflowError):
    pass


class LinearSolveFailure(McflowError):
    pass


class ShootingFailure(McflowError):
    pass


class FitFailure(McflowError):
    pass


class RegionError(McflowError):
    pass


class ConstantSearchFailure(McflowError):
    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class InvalidInitialData(McflowError):
    pass


class GlueFailure(McflowError):
    pass


class SingularProfile(McflowError):
    pass


class SandwichViolation(McflowError):
    pass


class MeshResolutionError(McflowError):
    pass


class ConfigError(McflowError):
    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IoError(McflowError):
    pass
