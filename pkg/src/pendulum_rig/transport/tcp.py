"""TCP transport: serve a rig over sockets, and the matching client.

The server is a thin shell around :class:`~pendulum_rig.rig.RigService`:
reader threads decode length-prefixed frames and post them to the rig core
thread, per-connection writer threads push broker deliveries back out.
The client session exposes the same publish/subscribe/sleep surface as the
in-process loopback, so environments do not care which one they hold.
"""

from __future__ import annotations

import socket
import threading
import time
from typing import Callable, Dict, List, Optional

from ..rig import CLOCK_ACK_TOPIC, CLOCK_TOPIC, RigService
from .broker import Subscriber
from .frames import (
    KIND_CONNECT,
    KIND_PUBLISH,
    KIND_SUBSCRIBE,
    Frame,
    FrameDecoder,
    encode_frame,
)

_RECV_CHUNK = 4096


class _ServerConn:
    """One accepted client: reader + writer thread pair."""

    def __init__(self, server: "RigServer", sock: socket.socket, peer: str):
        self.server = server
        self.sock = sock
        self.peer = peer
        self.subscriber = Subscriber(capacity=server.queue_capacity, sink=self._wake)
        self._has_data = threading.Event()
        self._closed = threading.Event()
        self._reader = threading.Thread(target=self._read_loop, name=f"rig-read-{peer}", daemon=True)
        self._writer = threading.Thread(target=self._write_loop, name=f"rig-write-{peer}", daemon=True)

    def start(self) -> None:
        self._reader.start()
        self._writer.start()

    def _wake(self, _sub: Subscriber) -> None:
        self._has_data.set()

    def _read_loop(self) -> None:
        service = self.server.service
        decoder = FrameDecoder()
        try:
            while not self._closed.is_set():
                data = self.sock.recv(_RECV_CHUNK)
                if not data:
                    break
                for frame in decoder.feed(data):
                    self._dispatch(frame, service)
        except (OSError, ValueError):
            pass
        finally:
            self.close()

    def _dispatch(self, frame: Frame, service: RigService) -> None:
        if frame.kind == KIND_SUBSCRIBE:
            topic = frame.topic
            service.post(lambda: service.client_subscribe(topic, self.subscriber))
        elif frame.kind == KIND_PUBLISH:
            topic, payload = frame.topic, frame.payload
            service.post(lambda: service.client_publish(topic, payload))
        # CONNECT needs no server-side state beyond the accepted socket.

    def _write_loop(self) -> None:
        try:
            while not self._closed.is_set():
                if not self._has_data.wait(timeout=0.5):
                    continue
                self._has_data.clear()
                while True:
                    try:
                        topic, payload = self.subscriber.queue.popleft()
                    except IndexError:
                        break
                    self.sock.sendall(encode_frame(KIND_PUBLISH, topic, payload))
        except OSError:
            pass
        finally:
            self.close()

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        self._has_data.set()
        service = self.server.service
        service.post(lambda: service.client_disconnect(self.subscriber))
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
        self.server._forget(self)


class RigServer:
    """Accepts connections and bridges them onto a rig service."""

    def __init__(self, service: RigService, host: str = "127.0.0.1", port: int = 0,
                 queue_capacity: int = 1024):
        self.service = service
        self.queue_capacity = queue_capacity
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self.host, self.port = self._listener.getsockname()
        self._conns: List[_ServerConn] = []
        self._lock = threading.Lock()
        self._accepting = threading.Event()
        self._accept_thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self.service.start(threaded=True)
        self._listener.listen()
        self._accepting.set()
        self._accept_thread = threading.Thread(target=self._accept_loop, name="rig-accept", daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while self._accepting.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _ServerConn(self, sock, f"{addr[0]}:{addr[1]}")
            with self._lock:
                self._conns.append(conn)
            conn.start()

    def _forget(self, conn: _ServerConn) -> None:
        with self._lock:
            if conn in self._conns:
                self._conns.remove(conn)

    def stop(self) -> None:
        self._accepting.clear()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            conn.close()
        self.service.stop()


class TcpSession:
    """Client session over a socket; mirrors the loopback session surface.

    ``clock_mode`` says how the *client* paces itself: ``"virtual"`` drives
    the rig clock through advance requests and acknowledgement roundtrips,
    ``"real"`` sleeps on the wall clock, ``"accel:<factor>"`` sleeps wall
    time divided by the factor and extrapolates rig time from the last
    acknowledgement.
    """

    def __init__(self, host: str, port: int, clock_mode: str = "real",
                 connect_timeout: float = 5.0):
        from ..rig import _parse_clock_mode  # shared mode grammar

        self.clock_mode, self.speed = _parse_clock_mode(clock_mode)
        self.sock = socket.create_connection((host, port), timeout=connect_timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock.settimeout(None)
        self._send_lock = threading.Lock()
        self._callbacks: Dict[str, Callable[[str, bytes], None]] = {}
        self._closed = threading.Event()
        self._ack = threading.Event()
        self._ack_sim_ms = 0.0
        self._ack_wall = time.monotonic()
        self._send(encode_frame(KIND_CONNECT, ""))
        self._reader = threading.Thread(target=self._read_loop, name="rig-client-read", daemon=True)
        self._reader.start()
        if self.clock_mode != "real":
            self.subscribe(CLOCK_ACK_TOPIC, lambda _t, _p: None)
            self._clock_request("get")

    def _send(self, data: bytes) -> None:
        with self._send_lock:
            self.sock.sendall(data)

    def publish(self, topic: str, payload: bytes) -> None:
        self._send(encode_frame(KIND_PUBLISH, topic, payload))

    def subscribe(self, topic: str, callback: Callable[[str, bytes], None]) -> None:
        self._callbacks[topic] = callback
        self._send(encode_frame(KIND_SUBSCRIBE, topic))

    def _read_loop(self) -> None:
        decoder = FrameDecoder()
        try:
            while not self._closed.is_set():
                data = self.sock.recv(_RECV_CHUNK)
                if not data:
                    break
                for frame in decoder.feed(data):
                    if frame.kind != KIND_PUBLISH:
                        continue
                    if frame.topic == CLOCK_ACK_TOPIC:
                        self._on_ack(frame.payload)
                    cb = self._callbacks.get(frame.topic)
                    if cb is not None:
                        cb(frame.topic, frame.payload)
        except (OSError, ValueError):
            pass
        finally:
            self._closed.set()
            self._ack.set()  # unblock any waiter so it can notice the close

    def _on_ack(self, payload: bytes) -> None:
        text = payload.decode("utf-8", errors="replace")
        if text.startswith("advanced:"):
            try:
                self._ack_sim_ms = float(text.split(":", 1)[1])
            except ValueError:
                return
            self._ack_wall = time.monotonic()
            self._ack.set()

    def _clock_request(self, command: str, timeout: float = 10.0) -> float:
        self._ack.clear()
        self.publish(CLOCK_TOPIC, command.encode())
        if not self._ack.wait(timeout):
            raise TimeoutError(f"no clock acknowledgement for {command!r}")
        if self._closed.is_set():
            raise ConnectionError("rig connection closed")
        return self._ack_sim_ms

    def now_ms(self) -> float:
        if self.clock_mode == "virtual":
            return self._ack_sim_ms
        if self.clock_mode == "accel":
            return self._ack_sim_ms + (time.monotonic() - self._ack_wall) * 1000.0 * self.speed
        return time.time() * 1000.0

    def sleep_ms(self, ms: float) -> None:
        if self.clock_mode == "virtual":
            self._clock_request(f"advance:{ms:.3f}")
        else:
            time.sleep(ms / 1000.0 / (self.speed if self.clock_mode == "accel" else 1.0))

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
