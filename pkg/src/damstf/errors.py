class DamstfError(Exception):
    pass


class InputShapeError(DamstfError, ValueError):
    pass


class LayoutError(DamstfError, ValueError):
    pass


class ParseError(DamstfError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DamstfError, ValueError):
    pass


class ConfigError(DamstfError, ValueError):
    """Invalid configuration; ``field`` holds a dotted path when known."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class InvariantError(DamstfError, AssertionError):
    pass
