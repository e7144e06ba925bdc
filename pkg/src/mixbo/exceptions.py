"""Exception hierarchy for mixbo."""


class MixBOError(Exception):
    """Base class for all errors raised by mixbo."""


class ConfigError(MixBOError, ValueError):
    """Invalid user configuration (domain file, options, CLI flags)."""


class MalformedConfig(ConfigError):
    pass


class InvalidBounds(ConfigError):
    pass


class UnknownKind(ConfigError):
    pass


class ZHfOutOfSpace(ConfigError):
    pass


class UnknownBenchmark(ConfigError):
    pass


class ArityMismatch(MixBOError, ValueError):
    pass


class KindMismatch(MixBOError, ValueError):
    pass


class NotAPermutation(MixBOError, ValueError):
    pass


class OutOfSpace(MixBOError, ValueError):
    pass


class InfeasibleSampling(MixBOError, RuntimeError):
    """Rejection sampling hit its retry cap."""


class SingularGram(MixBOError, RuntimeError):
    pass


class SingularCovariance(MixBOError, RuntimeError):
    pass


class EmptyData(MixBOError, ValueError):
    pass


class NotAdditive(MixBOError, ValueError):
    pass


class BadGroupIndex(MixBOError, IndexError):
    pass


class NotProductKernel(MixBOError, ValueError):
    pass


class UnknownAcquisition(MixBOError, ValueError):
    pass


class UnknownLabel(MixBOError, KeyError):
    pass


class GridMissingZhf(MixBOError, ValueError):
    pass


class EmptySet(MixBOError, ValueError):
    pass


class UnknownQuery(MixBOError, KeyError):
    pass


class WorkerFailure(MixBOError, RuntimeError):
    pass
