class EvasError(ValueError):
    """Base class for data errors raised by the pipeline (CLI exit code 2)."""


class PpmError(EvasError):
    pass


class LayoutError(EvasError):
    pass


class TraceError(EvasError):
    pass


class ConfigError(EvasError):
    pass
