"""Length-prefixed pub/sub frames.

Wire layout, all integers big-endian:

    4 bytes  payload length = 1 + 2 + len(topic) + len(payload)
    1 byte   kind: 0x01 CONNECT, 0x02 SUBSCRIBE, 0x03 PUBLISH
    2 bytes  topic length
    N bytes  topic, UTF-8
    M bytes  payload, UTF-8 (empty for CONNECT/SUBSCRIBE)

The decoder is incremental: feed it arbitrary byte chunks and it yields
complete frames, buffering partial input rather than erroring.  Anything
structurally wrong (unknown kind, lengths that do not add up) raises
FramingError and the connection should be reset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, List

KIND_CONNECT = 0x01
KIND_SUBSCRIBE = 0x02
KIND_PUBLISH = 0x03
_KNOWN_KINDS = (KIND_CONNECT, KIND_SUBSCRIBE, KIND_PUBLISH)

_HEADER = struct.Struct(">IBH")  # length, kind, topic_len
MAX_TOPIC = 0xFFFF
MAX_BODY = 0xFFFFFFFF


class FramingError(Exception):
    pass


@dataclass(frozen=True)
class Frame:
    kind: int
    topic: str
    payload: bytes = b""


def encode_frame(kind: int, topic: str, payload: bytes = b"") -> bytes:
    if kind not in _KNOWN_KINDS:
        raise FramingError(f"unknown frame kind {kind:#x}")
    topic_b = topic.encode("utf-8")
    if kind != KIND_CONNECT and not topic_b:
        raise FramingError("topic required for SUBSCRIBE/PUBLISH")
    if len(topic_b) > MAX_TOPIC:
        raise FramingError("topic too long")
    body_len = 1 + 2 + len(topic_b) + len(payload)
    if body_len > MAX_BODY:
        raise FramingError("payload too long")
    return _HEADER.pack(body_len, kind, len(topic_b)) + topic_b + payload


def encode(frame: Frame) -> bytes:
    return encode_frame(frame.kind, frame.topic, frame.payload)


class FrameDecoder:
    """Incremental decoder; never reads past a frame's declared length."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> List[Frame]:
        self._buf.extend(data)
        frames: List[Frame] = []
        while True:
            frame = self._try_decode()
            if frame is None:
                return frames
            frames.append(frame)

    def pending(self) -> int:
        """Bytes buffered awaiting completion of the next frame."""
        return len(self._buf)

    def _try_decode(self):
        if len(self._buf) < 4:
            return None
        (body_len,) = struct.unpack_from(">I", self._buf, 0)
        if body_len < 3:
            raise FramingError(f"declared length {body_len} below minimum frame")
        if len(self._buf) < 4 + body_len:
            return None
        kind = self._buf[4]
        if kind not in _KNOWN_KINDS:
            raise FramingError(f"unknown frame kind {kind:#x}")
        (topic_len,) = struct.unpack_from(">H", self._buf, 5)
        if 3 + topic_len > body_len:
            raise FramingError("topic length exceeds declared frame length")
        start = 7
        topic = bytes(self._buf[start : start + topic_len]).decode("utf-8")
        payload = bytes(self._buf[start + topic_len : 4 + body_len])
        if kind != KIND_CONNECT and not topic:
            raise FramingError("empty topic in SUBSCRIBE/PUBLISH")
        del self._buf[: 4 + body_len]
        return Frame(kind, topic, payload)


def iter_frames(data: bytes) -> Iterator[Frame]:
    """Decode a complete byte string; raises if trailing bytes remain."""
    dec = FrameDecoder()
    frames = dec.feed(data)
    if dec.pending():
        raise FramingError(f"{dec.pending()} trailing bytes after last frame")
    yield from frames
