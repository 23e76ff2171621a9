"""Exception types shared across the toolkit."""


class ForgeError(Exception):
    """Base class for every error raised by groundforge."""


class InvalidGeometryError(ForgeError, ValueError):
    pass


class UnserializableTextError(ForgeError, ValueError):
    pass


class EmptyInputError(ForgeError, ValueError):
    pass


class IngestError(ForgeError):
    """A record in an input file could not be read.

    ``line`` is 1-based; ``field`` names the offending key when known.
    """

    def __init__(self, line: int, message: str, field: str | None = None):
        self.line = line
        self.field = field
        super().__init__(f"line {line}: {message}")


class TemplateError(ForgeError, KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class StructureError(ForgeError, ValueError):
    """Conversation turns do not alternate user/assistant."""


class ClientConfigError(ForgeError):
    pass


class TransportError(ForgeError):
    """Chat-completion service failed after all retry attempts."""


class TransientError(TransportError):
    """Failure worth retrying (timeouts, 429, 5xx)."""


class EmptyResponseError(TransportError):
    pass
