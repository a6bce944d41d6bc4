"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, ValidationError and
subclasses -> 3, NumericalError -> 4.
"""


class LvgenError(Exception):
    pass


class ConfigError(LvgenError):
    """Bad configuration, population spec, or command-line usage."""


class ValidationError(LvgenError):
    """Data violates a structural contract (mesh, tensor shape, file schema)."""


class ParseError(ValidationError):
    """Malformed file content; carries location information when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class GeometryError(ValidationError):
    """Geometrically degenerate or inverted input (collinear rim, epi inside endo)."""


class NumericalError(LvgenError):
    """Numerical failure at run time (NaN loss, divergence)."""
