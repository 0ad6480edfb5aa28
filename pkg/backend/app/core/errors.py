"""
Exception hierarchy shared by the services, the CLI and the HTTP layer.

Every error carries the CLI exit code it maps to:
2 = bad input / configuration, 3 = numeric failure, 4 = unsupported measure.
"""

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_UNSUPPORTED = 4


class CoalescentError(Exception):
    exit_code = EXIT_NUMERIC


class InputError(CoalescentError):
    exit_code = EXIT_CONFIG


class NumericError(CoalescentError):
    exit_code = EXIT_NUMERIC


class UnsupportedError(CoalescentError):
    exit_code = EXIT_UNSUPPORTED


# 입력 오류
class ConfigError(InputError):
    pass


class SimplexViolation(InputError):
    pass


class MassViolation(InputError):
    pass


class BadParameter(InputError):
    pass


class BadBeta(InputError):
    pass


class BadGamma(InputError):
    pass


class BadConfiguration(InputError):
    pass


class TooLarge(InputError):
    pass


class ZeroReplicates(InputError):
    pass


class GammaZeroWithTauStar(InputError):
    pass


class UnknownLineage(InputError):
    pass


class InactiveLineage(InputError):
    pass


class NonmonotoneTime(InputError):
    pass


# 수치 오류
class QuadratureFailure(NumericError):
    pass


class RateOverflow(NumericError):
    pass


class HorizonExceeded(NumericError):
    pass


class NonTermination(NumericError):
    pass


# 지원하지 않는 measure
class UnsupportedMeasure(UnsupportedError):
    pass


class BarUnsupported(UnsupportedError):
    pass


class CDIRequired(UnsupportedError):
    pass
