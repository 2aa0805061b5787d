"""Exception types raised across the package."""


class DocSigError(Exception):
    """Base class for all package errors."""


class InvalidImage(DocSigError, ValueError):
    pass


class InvalidParameter(DocSigError, ValueError):
    pass


class DegenerateData(DocSigError, ValueError):
    pass


class TrainingDiverged(DocSigError, RuntimeError):
    pass


class ManifestError(DocSigError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StoreError(DocSigError, IOError):
    pass


class ConfigError(DocSigError, ValueError):
    pass
