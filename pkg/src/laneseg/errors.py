"""Shared exception types."""


class LanesegError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(LanesegError):
    """An operation was handed data that breaks its stated contract."""


class ConfigurationError(LanesegError):
    """A run configuration is invalid (bad dims, empty dataset, ...)."""


class ModelFormatError(LanesegError):
    """A model file is not in the expected format (magic, version, syntax)."""


class ModelShapeError(LanesegError):
    """Stored weights do not match the declared architecture."""


class TruncatedWeightsError(LanesegError):
    """A weights file ends before all declared values were read."""


class ModelIOError(LanesegError):
    """Reading or writing a model file failed at the OS level."""

    def __init__(self, path, cause):
        super().__init__(f"{path}: {cause}")
        self.path = str(path)
        self.cause = cause


class DecodeError(LanesegError):
    """An image file is missing or cannot be decoded."""


class ChannelCountError(LanesegError):
    """An image has the wrong channel layout for its role."""


class MaskValueError(LanesegError):
    """A mask contains gray levels too far from the binary 0/255 poles."""


class TransportError(LanesegError):
    """An HTTP exchange failed (non-200 status, connection failure, ...)."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class FixtureMissingError(TransportError):
    """Playback was asked for a request that has no recorded response."""


class NetworkContactError(TransportError):
    """A transport that must stay offline was asked to perform a request."""


class ResponseParseError(LanesegError):
    """A response body is not syntactically valid for its content type."""


class ResponseSchemaError(LanesegError):
    """A parsed response is missing required fields."""


class AuthorizationError(LanesegError):
    """The remote API rejected the credentials."""


class ApiStatusError(LanesegError):
    """The remote API answered with an unexpected application-level status."""


class ContentTypeError(LanesegError):
    """A response body is not the media kind the request expected."""


class PipelineStageError(LanesegError):
    """A stage of the acquisition pipeline failed; names the stage."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
