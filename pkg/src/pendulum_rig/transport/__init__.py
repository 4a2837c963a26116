from .frames import (
    Frame,
    FrameDecoder,
    FramingError,
    KIND_CONNECT,
    KIND_PUBLISH,
    KIND_SUBSCRIBE,
    encode_frame,
)
from .broker import Broker, ChannelFault, Subscriber

__all__ = [
    "Frame",
    "FrameDecoder",
    "FramingError",
    "KIND_CONNECT",
    "KIND_PUBLISH",
    "KIND_SUBSCRIBE",
    "encode_frame",
    "Broker",
    "ChannelFault",
    "Subscriber",
]
