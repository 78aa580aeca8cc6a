"""Exception types shared across the package."""


class QcboxError(ValueError):
    """Base class for all domain errors raised by qcbox."""


class LabelCollision(QcboxError):
    """Two operands declare the same tensor-factor label where they must not."""


class LabelNotFound(QcboxError):
    """A requested tensor-factor label is not part of the space."""


class DimMismatch(QcboxError):
    """Dimensions of matched factors, operators or states disagree."""


class EmptyKrausSet(QcboxError):
    """A Kraus decomposition with no operators was supplied."""


class LinkAssociativityViolation(QcboxError):
    """A label appears in more than two operands of a chained link product."""


class TruncationOverflow(QcboxError):
    """A Fock state would exceed the declared message-count truncation."""


class EmbeddingMismatch(QcboxError):
    """The target timestamp set of a vacuum embedding is not a superset."""


class WireMergeMismatch(QcboxError):
    """Wires with different timestamp sets cannot be merged."""


class IncompleteQcQc(QcboxError):
    """Missing slot operators leave an assembled slot map non-isometric."""


class InvalidSlice(QcboxError):
    """A sequence-representation slice is not an isometry or is mistimed."""


class AcausalLoop(QcboxError):
    """A loop would feed an output back to an input at an earlier or equal time."""


class IncompleteKraus(QcboxError):
    """A Kraus set does not resolve the identity."""


class InvalidPolicy(QcboxError):
    """An extension policy does not produce an isometry."""


class InvalidLambda(QcboxError):
    """Encoder amplitudes violate the normalization constraint."""


class DecoderSingular(QcboxError):
    """The decoder would have to divide by a zero amplitude on a live branch."""


class SchemaError(QcboxError):
    """A JSON document does not match the expected schema."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnsupportedExtension(QcboxError):
    """An operation needs a port layout that the given extension does not have."""


class SchemaVersionMismatch(SchemaError):
    """A JSON document was written for a different schema version."""
