from .client import (
    OBS_SHAPE,
    ClientError,
    ProtocolStateError,
    RemoteEnv,
    ServerError,
    connect,
)

__all__ = [
    "OBS_SHAPE",
    "ClientError",
    "ProtocolStateError",
    "RemoteEnv",
    "ServerError",
    "connect",
]

__version__ = "0.1.0"
