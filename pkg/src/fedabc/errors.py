"""Exception hierarchy shared across the package."""


class FedAbcError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(FedAbcError):
    """Operand shapes are incompatible."""


class NotPositiveDefinite(FedAbcError):
    """A matrix required to be positive-definite is not."""


class InvalidHyperparameter(FedAbcError):
    """A prior or sampler hyperparameter is outside its valid range."""


class InvalidWeights(FedAbcError):
    """A probability vector has negative entries or does not sum to one."""


class NumericalOverflow(FedAbcError):
    """A loss evaluation produced non-finite values."""


class InsufficientProposals(FedAbcError):
    """Fewer proposals than the requested number of accepted parameters."""


class EmptyPosterior(FedAbcError):
    """A posterior summary was requested for an empty accepted set."""


class SingleClassData(FedAbcError):
    """A classifier metric or fit requires both classes to be present."""


class MinorityTooSmall(FedAbcError):
    """A site has too few minority-class samples to participate."""


class HandshakeMismatch(FedAbcError):
    """A site announced metadata that disagrees with the run configuration."""


class TransportClosed(FedAbcError):
    """The peer closed the channel mid-run."""


class ReportShapeMismatch(FedAbcError):
    """A discrepancy report does not match the dispatched proposal batch."""


class ParseError(FedAbcError):
    """A wire frame or input file could not be parsed."""


class MissingColumn(FedAbcError):
    """A required CSV column is absent."""


class NonBinaryLabel(FedAbcError):
    """A label column contains values other than 0 and 1."""


class NonFiniteFeature(FedAbcError):
    """A feature value is NaN or infinite."""
