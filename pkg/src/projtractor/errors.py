"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each class carries enough context
(offsets, points, determinants) to produce a useful diagnostic.
"""

from __future__ import annotations


class ProjTractorError(Exception):
    """Base class for all library errors."""


class ExprSyntaxError(ProjTractorError):
    def __init__(self, message, offset, expected=(), text=""):
        self.offset = offset
        self.expected = tuple(expected)
        self.text = text
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f"; expected one of {', '.join(repr(e) for e in self.expected)}"
        super().__init__(detail)


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name, offset, text=""):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset, (), text)


class JetDomainError(ProjTractorError, ValueError):
    """A jet function was evaluated where it is singular (pole, log/sqrt branch)."""

    def __init__(self, message, subexpr=None, points=None):
        self.reason = message
        self.subexpr = subexpr
        self.points = points
        text = message
        if subexpr is not None:
            text += f" in subexpression {subexpr}"
        if points is not None:
            text += f" at {points}"
        super().__init__(text)


class SingularMetricError(ProjTractorError, ValueError):
    def __init__(self, point, det):
        self.point = point
        self.det = det
        super().__init__(f"metric is singular at {point}: det(g) = {det:.3e}")


class DegenerateSigmaError(ProjTractorError, ValueError):
    def __init__(self, det, point=None):
        self.det = det
        self.point = point
        super().__init__(f"sigma is degenerate (det = {det:.3e})"
                         + (f" at {point}" if point is not None else ""))


class NotInKernelError(ProjTractorError, ValueError):
    """bgg_project was given a form outside ker(codifferential)."""


class AlgebraicDegeneracyError(ProjTractorError, ValueError):
    def __init__(self, det, point=None):
        self.det = det
        self.point = point
        super().__init__(
            f"L(sigma) is degenerate (det = {det:.3e})"
            + (f" at {point}" if point is not None else "")
            + "; on the locus where sigma is nondegenerate this happens exactly"
              " where the scalar curvature of g^sigma vanishes")


class ZeroTauError(ProjTractorError, ValueError):
    pass


class SingularSchoutenError(ProjTractorError, ValueError):
    pass


class PathExitsDomainError(ProjTractorError, ValueError):
    pass


class KernelVectorInvalidError(ProjTractorError, ValueError):
    def __init__(self, residual, tol):
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"vector is not in the numerical kernel of the constraints "
            f"(residual {residual:.3e} > {tol:.1e})")


class OrderTooHighError(ProjTractorError, ValueError):
    pass


class GeometryFileError(ProjTractorError):
    """Schema or parse failure in a geometry file; `path` locates the problem."""

    def __init__(self, message, path=()):
        self.path = tuple(path)
        where = "/".join(str(p) for p in self.path) or "<root>"
        super().__init__(f"{where}: {message}")
