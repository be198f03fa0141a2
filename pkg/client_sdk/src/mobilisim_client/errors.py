"""Client-side errors."""


class ClientError(Exception):
    """Base class for SDK errors."""


class ConnectionRefused(ClientError):
    """Server was not reachable at the given address."""


class HandshakeTimeout(ClientError):
    """No valid WELCOME arrived in time."""


class ProtocolError(ClientError):
    """Bytes on the wire did not follow the documented frame format."""


class ConnectionLost(ClientError):
    """The connection dropped mid-session."""


class UnknownJoint(ClientError):
    """Joint name not present in the server's scene description."""


class ServerError(ClientError):
    """The server answered with an ERROR frame."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
