"""Exception hierarchy.

Every error carries an ``exit_code``: 2 for configuration problems, 1 for
numerical failures. The CLI maps uncaught errors to these codes.
"""


class CritError(Exception):
    exit_code = 1

    def record(self):
        return {"error": type(self).__name__, "message": str(self)}


class ConfigError(CritError):
    exit_code = 2


class InvalidGrid(ConfigError):
    pass


class ShapeMismatch(ConfigError):
    pass


class DimensionCap(ConfigError):
    pass


class ScenarioError(ConfigError):
    pass


class UnsupportedP(ConfigError):
    pass


class ContourDegenerate(ConfigError):
    pass


class NotContractive(CritError):
    pass


class IterationCap(CritError):
    pass


class ZeroImage(CritError):
    pass


class Stagnation(CritError):
    pass


class InsufficientData(CritError):
    pass


class DescentStall(CritError):
    pass


class SingularSystem(CritError):
    pass


class Divergence(CritError):
    pass


class ShiftTooClose(CritError):
    pass


class ImaginaryResidue(CritError):
    pass


class NoConvergence(CritError):
    pass


class CertificateFail(CritError):
    pass


class DegenerateGap(CritError):
    pass


class ContourHitsSpectrum(CritError):
    pass
