"""Thin client for the mobilisim asynchronous TCP control protocol.

Implements the documented wire format only; shares no code with the server.
"""

from .client import ClientSession, SceneInfo, connect
from .errors import (ClientError, ConnectionLost, ConnectionRefused,
                     HandshakeTimeout, ProtocolError, ServerError, UnknownJoint)
from .framing import Message, Parser, decode, encode

__version__ = "0.1.0"

__all__ = [
    "ClientError", "ClientSession", "ConnectionLost", "ConnectionRefused",
    "HandshakeTimeout", "Message", "Parser", "ProtocolError", "SceneInfo",
    "ServerError", "UnknownJoint", "connect", "decode", "encode",
]
