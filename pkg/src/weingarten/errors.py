"""Exception types shared across the package."""


class DomainRangeError(ValueError):
    """Input outside the admissible range of a space-form variable."""


class AdmissibilityError(ValueError):
    """Principal curvatures left the required Garding cone."""


class AssemblyError(RuntimeError):
    """Discrete stencil or system assembly failed; message names the node."""


class ParseError(ValueError):
    """Problem file or expression syntax error, with location."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if column is not None:
            parts.append(f"col {column}")
        loc = f" ({', '.join(parts)})" if parts else ""
        super().__init__(message + loc)


class SemanticError(ValueError):
    """Problem file is syntactically valid but inconsistent."""


class EvaluationError(ValueError):
    """Expression evaluation produced a non-finite value or lacked a variable."""
