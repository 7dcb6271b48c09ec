"""Exception types shared across the library.

Every error raised from a numerical routine carries the originating module
and operation name so front ends can report where a failure came from.
"""


class EllfolError(Exception):
    """Base class; carries (module, operation) provenance for diagnostics."""

    def __init__(self, message, module="", operation=""):
        super().__init__(message)
        self.module = module
        self.operation = operation

    def __str__(self):
        base = super().__str__()
        if self.module or self.operation:
            return f"[{self.module}.{self.operation}] {base}"
        return base


class BodyError(EllfolError):
    """Invalid convex-body description (nonconvex polygon, bad parameter)."""


class ConfigError(EllfolError):
    """Malformed configuration text; carries a line number when known."""

    def __init__(self, message, line=None, **kw):
        super().__init__(message, **kw)
        self.line = line

    def __str__(self):
        s = super().__str__()
        if self.line is not None:
            s += f" (line {self.line})"
        return s


class SolverError(EllfolError):
    """Inscribed-ellipse optimization failed; carries the residual violation."""

    def __init__(self, message, violation=None, **kw):
        super().__init__(message, **kw)
        self.violation = violation


class EvalError(EllfolError):
    """Leaf inversion did not converge; carries the best residual reached."""

    def __init__(self, message, residual=None, **kw):
        super().__init__(message, **kw)
        self.residual = residual
