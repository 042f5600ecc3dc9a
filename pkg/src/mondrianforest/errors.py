"""Exception hierarchy shared across the package."""


class MondrianForestError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MondrianForestError):
    """Invalid or unusable input data (empty sets, non-finite values, bad CSV cells)."""


class DimensionMismatchError(DataError):
    """Feature vector dimension does not match the model/tree dimension."""


class NumericalError(MondrianForestError):
    """A numerical fault (non-finite message or posterior) was detected."""


class ModelFormatError(MondrianForestError):
    """Base class for model (de)serialization failures."""


class VersionMismatchError(ModelFormatError):
    """Serialized model uses an unsupported format version."""


class TruncatedModelError(ModelFormatError):
    """Serialized model stream ended prematurely or is not parseable."""


class ChecksumError(ModelFormatError):
    """Serialized model payload does not match its trailing checksum."""
