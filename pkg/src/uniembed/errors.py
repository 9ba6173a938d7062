"""Exception hierarchy. Every domain failure derives from UniEmbedError so
the CLI can map it to exit code 1."""


class UniEmbedError(Exception):
    pass


class ShapeError(UniEmbedError, ValueError):
    pass


class UsageError(UniEmbedError):
    pass


class TrainingError(UniEmbedError):
    def __init__(self, message, *, layer=None, step=None):
        super().__init__(message)
        self.layer = layer
        self.step = step


class FormatVersionError(UniEmbedError):
    pass


class ParseError(UniEmbedError):
    def __init__(self, message, *, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SamplingError(UniEmbedError):
    pass


class RoutingError(UniEmbedError):
    pass


class ComparisonError(UniEmbedError):
    pass


class SpecError(UniEmbedError, ValueError):
    pass


class ConfigError(UniEmbedError):
    def __init__(self, message, *, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key
