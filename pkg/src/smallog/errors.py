"""Exception hierarchy. Everything user-facing derives from SmallogError."""


class SmallogError(Exception):
    """Base class for expected failures; the CLI maps these to exit code 1."""


class ParseError(SmallogError):
    """Malformed input file (bad XML, bad CSV cell, unparseable timestamp)."""


class ConfigurationError(SmallogError):
    """Invalid spec, mapping, or config file content."""


class DomainError(SmallogError):
    """Operation applied outside its domain (empty log, bad label, ...)."""


class PredictorError(SmallogError):
    """Base for failures of a predictor invocation; contained per grid cell."""


class PredictorFailure(PredictorError):
    """External predictor exited nonzero or timed out."""


class ProtocolError(PredictorError):
    """External predictor violated the file protocol (line count, labels)."""
