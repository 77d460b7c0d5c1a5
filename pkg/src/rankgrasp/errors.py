"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class SizeError(DomainError):
    """A hierarchy is too large (or empty) for exact integer ranking."""


class ConfigurationError(ValueError):
    """A scene or evaluator lacks something the operation requires."""


class SceneValidationError(ValueError):
    """A scene document violates the schema.

    ``field`` is a dotted path to the offending entry, ``location`` the
    file it came from (if any).
    """

    def __init__(self, message, field=None, location=None):
        self.field = field
        self.location = location
        prefix = ""
        if location:
            prefix += f"{location}: "
        if field:
            prefix += f"{field}: "
        super().__init__(prefix + message)


class CloudLoadError(ValueError):
    """A point-cloud file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = str(path) if path is not None else "<cloud>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")
