"""Exception types raised across the package."""


class ConfcovError(ValueError):
    """Base class for all errors raised by confcov."""


class RowCountTooSmall(ConfcovError):
    pass


class NumericalFailure(ConfcovError):
    """LAPACK routine failed to converge."""


class DegenerateRank(ConfcovError):
    """Input has numerical rank zero (e.g. all observations identical)."""


class SubsampleTooSmall(ConfcovError):
    pass


class SubsampleNotHighDimensional(ConfcovError):
    """Subsample size m violates m - 1 < p."""


class InvalidSubsampleCount(ConfcovError):
    pass


class InvalidSpectrumMap(ConfcovError):
    pass


class EllOutOfRange(ConfcovError):
    pass


class KmaxOutOfRange(ConfcovError):
    pass


class IndivisibleDimension(ConfcovError):
    pass


class SingularConstruction(ConfcovError):
    pass


class ZeroVariance(ConfcovError):
    pass


class RTooLarge(ConfcovError):
    pass


class NotConverged(ConfcovError):
    def __init__(self, max_iter, kkt_residual=float("nan")):
        super().__init__(
            f"coordinate descent did not converge in {max_iter} sweeps "
            f"(kkt residual {kkt_residual:.3e})"
        )
        self.max_iter = max_iter
        self.kkt_residual = kkt_residual


class SingularGram(ConfcovError):
    pass


class NodewiseFailure(ConfcovError):
    """One or more nodewise fits failed; ``failures`` maps node -> exception."""

    def __init__(self, failures):
        nodes = ", ".join(str(j) for j in sorted(failures))
        super().__init__(f"nodewise regression failed for nodes: {nodes}")
        self.failures = failures


class TooLargeForExhaustive(ConfcovError):
    pass


class ConfigInvalid(ConfcovError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ParseError(ConfcovError):
    def __init__(self, line, column, message):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ShapeError(ConfcovError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class RankDeficientLoadings(UserWarning):
    """Loadings do not have full column rank; diagnostics use the spanned subspace."""
