"""Exception hierarchy shared across the toolkit."""


class ModkitError(Exception):
    """Base class for every error raised by modkit."""


class DimensionError(ModkitError, ValueError):
    """Tensor shapes or dims do not satisfy an operation's contract."""


class TapeError(ModkitError, RuntimeError):
    """Misuse of the autodiff tape (non-scalar loss, repeated backward, ...)."""


class SerializationError(ModkitError, ValueError):
    """A binary artifact could not be read or written."""


class BadMagicError(SerializationError):
    """File does not start with the expected magic bytes."""


class BadVersionError(SerializationError):
    """File carries an unsupported format version."""


class TruncatedPayloadError(SerializationError):
    """File ends before its declared payload does."""


class SignatureMismatchError(ModkitError, ValueError):
    """Module input/output signatures do not line up."""


class RegistryError(ModkitError):
    """Registry state violation."""


class DuplicateModuleIdError(RegistryError):
    """A module with this id is already registered."""


class UnknownModuleIdError(RegistryError, KeyError):
    """No module with this id in the registry."""


class TeacherProtocolError(ModkitError, RuntimeError):
    """The external teacher endpoint violated the wire protocol."""


class TeacherIdMismatchError(TeacherProtocolError):
    """Response id does not match the request id."""


class TeacherTimeoutError(TeacherProtocolError):
    """The teacher endpoint did not answer within the timeout."""


class TrainingDivergedError(ModkitError, RuntimeError):
    """Training aborted on a non-finite loss."""


class IngestError(ModkitError, ValueError):
    """An image folder could not be ingested."""
