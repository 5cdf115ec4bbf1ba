"""Exception hierarchy shared by every ecotrace module."""


class EcotraceError(Exception):
    """Base class for all errors raised by ecotrace."""


# catalog

class CatalogError(EcotraceError, ValueError):
    pass


class CatalogParseError(CatalogError):
    def __init__(self, path, line, reason):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class EmptyCatalogError(CatalogError):
    pass


class UnsupportedStrategyError(EcotraceError, ValueError):
    pass


class UnknownGpuError(CatalogError):
    pass


# telemetry

class SensorUnavailableError(EcotraceError, RuntimeError):
    def __init__(self, probed):
        self.probed = list(probed)
        super().__init__("no telemetry channel available; probed: " + ", ".join(self.probed))


class SensorPermissionError(EcotraceError, PermissionError):
    def __init__(self, path):
        self.path = str(path)
        super().__init__(
            f"permission denied reading energy counter {self.path} "
            "(RAPL counters are root-only by default)"
        )


class SpawnError(EcotraceError, OSError):
    pass


class EmptyTraceError(EcotraceError, ValueError):
    pass


class OrderingError(EcotraceError, ValueError):
    pass


class TraceVersionError(EcotraceError, ValueError):
    pass


class TraceValidationError(EcotraceError, ValueError):
    def __init__(self, index, reason):
        self.index = index
        super().__init__(f"sample {index}: {reason}")


class ChannelMissingError(EcotraceError, ValueError):
    def __init__(self, channel, what=""):
        self.channel = channel
        msg = f"required channel {channel!r} is missing"
        super().__init__(f"{msg} ({what})" if what else msg)


# estimators

class NoMeasurableComponentError(EcotraceError, ValueError):
    pass


class RaplRequiredError(ChannelMissingError):
    def __init__(self, what=""):
        super().__init__("rapl_package", what or "RAPL energy counters are required")


# footprint

class InvalidPueError(EcotraceError, ValueError):
    pass


class IntensityRequiredError(EcotraceError, ValueError):
    pass


class IntensityNotFoundError(EcotraceError, LookupError):
    pass


class InvalidFactorError(EcotraceError, ValueError):
    pass


# analysis

class InsufficientDataError(EcotraceError, ValueError):
    pass


class MarksRequiredError(EcotraceError, ValueError):
    pass


class DegenerateGroundTruthError(EcotraceError, ValueError):
    pass
