"""Exception hierarchy shared by every riemap module."""


class RiemapError(Exception):
    """Base class for all errors raised by riemap."""


class EvaluationError(RiemapError):
    """A primitive was evaluated outside its domain (sqrt of a negative, 1/0, ...)."""

    def __init__(self, primitive, message, location=None):
        self.primitive = primitive
        self.location = location
        where = f" at {location}" if location else ""
        super().__init__(f"{primitive}{where}: {message}")


class ExprSyntaxError(RiemapError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class NotPositiveDefiniteError(RiemapError):
    pass


class IntegrationBlowup(RiemapError):
    def __init__(self, last_s):
        self.last_s = last_s
        super().__init__(f"non-finite state encountered; last valid s = {last_s!r}")


class ChartExitError(RiemapError):
    def __init__(self, s_exit, message="trajectory left the chart domain"):
        self.s_exit = s_exit
        super().__init__(f"{message} at s = {s_exit!r}")


class GeometryError(RiemapError):
    """Precondition on frames, grids, ranks or tangent vectors violated."""


class DegenerateJetError(GeometryError):
    pass


class ScenarioError(RiemapError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        parts = []
        if field:
            parts.append(field)
        if line is not None:
            parts.append(f"line {line}")
        prefix = f"[{', '.join(parts)}] " if parts else ""
        super().__init__(prefix + message)
