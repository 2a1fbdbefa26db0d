"""Exception hierarchy.

Every error the library raises on purpose derives from ``SensitivityError`` so
callers (the CLI, the bootstrap loop) can tell domain failures from bugs.
"""


class SensitivityError(Exception):
    kind = "error"


class SchemaError(SensitivityError):
    kind = "schema"


class ParseError(SensitivityError):
    kind = "parse"


class DimensionError(SensitivityError):
    kind = "dimension"


class DegenerateInputError(SensitivityError):
    kind = "degenerate_input"


class CollinearityError(SensitivityError):
    kind = "collinearity"

    def __init__(self, msg, columns=()):
        super().__init__(msg)
        self.columns = tuple(columns)


class DecompositionError(SensitivityError):
    kind = "decomposition"

    def __init__(self, msg, pivot=None):
        super().__init__(msg)
        self.pivot = pivot


class DegeneracyError(SensitivityError):
    kind = "degeneracy"


class RelevanceError(SensitivityError):
    kind = "relevance"


class DomainError(SensitivityError):
    kind = "domain"


class InfeasibleError(SensitivityError):
    kind = "infeasible"

    def __init__(self, msg, achievable=None):
        super().__init__(msg)
        self.achievable = achievable


class OptimizationError(SensitivityError):
    kind = "optimization"


class UndefinedAllocationError(SensitivityError):
    kind = "undefined_allocation"


class BootstrapError(SensitivityError):
    kind = "bootstrap"

    def __init__(self, msg, failures=0, B=0):
        super().__init__(msg)
        self.failures = failures
        self.B = B
