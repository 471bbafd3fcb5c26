"""Exception hierarchy shared across the package.

Every error that callers are expected to branch on gets its own class;
the CLI maps these onto its exit-code contract.
"""


class CemtmError(Exception):
    """Base class for all package-specific errors."""


# corpus storage ----------------------------------------------------------

class MissingFile(CemtmError):
    pass


class CorruptHeader(CemtmError):
    pass


class DimensionMismatch(CemtmError):
    pass


class NonFiniteValue(CemtmError):
    pass


class EmptyVocabulary(CemtmError):
    pass


# model / training --------------------------------------------------------

class ShapeMismatch(CemtmError):
    pass


class NonPositiveSigma(CemtmError):
    pass


class EmptyCorpus(CemtmError):
    pass


class DivergedLoss(CemtmError):
    pass


# topic extraction --------------------------------------------------------

class EmptyExtraction(CemtmError):
    pass


class TopicOutOfRange(CemtmError):
    pass


# evaluation --------------------------------------------------------------

class EmptyStats(CemtmError):
    pass


class NoVectorsAvailable(CemtmError):
    pass


class InsufficientWords(CemtmError):
    pass


class SingleTopic(CemtmError):
    pass


class LabelMismatch(CemtmError):
    pass


class EndpointUnavailable(CemtmError):
    pass


class UnparsableResponse(CemtmError):
    pass


# retrieval ---------------------------------------------------------------

class EmptyIndex(CemtmError):
    pass
