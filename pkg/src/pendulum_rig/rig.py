"""The virtual rig: physics + firmware + broker on one clock.

A :class:`RigService` hosts one embedded broker and any number of devices,
each a physics instance driven in 5 ms frames plus a firmware task with its
own observation/acting cadences.  Everything shares one scheduler, so the
service can run

* client-paced ("virtual"): time only moves when a client publishes an
  advance request on the clock topic (or calls :meth:`advance_ms` over the
  loopback).  Fully deterministic; used by tests, differential runs and
  accelerated training.
* wall-tracking ("real" / "accel"): a driver thread advances the scheduler
  to follow the wall clock at a configurable speed.

Topics per device: ``pendulum/<id>/observations`` and
``pendulum/<id>/actions``.  The service-wide clock protocol lives on
``rig/clock`` (commands ``advance:<ms>`` and ``get``) with replies on
``rig/clock/ack`` (``advanced:<now_ms>``), so remote clients can pace a
virtual rig over the same wire as everything else.

Same-deadline event order (physics frame, then message delivery, then
acting, then observation) plus a 1 ms acting-phase offset give an exact
correspondence with the direct simulator: an action published at a step
boundary is in force for every frame of that step.
"""

from __future__ import annotations

import math
import queue
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

from .clock import PRIO_ACT, PRIO_OBS, PRIO_PHYSICS, Scheduler
from .config import ConfigError
from .firmware import Firmware, FirmwareConfig
from .physics import PendulumState, PhysicsParams, step_frame
from .transport.broker import Broker, ChannelFault, Subscriber

CLOCK_TOPIC = "rig/clock"
CLOCK_ACK_TOPIC = "rig/clock/ack"
ACT_PHASE_MS = 1.0  # acting runs just after the grid so boundary-published actions land first

FRAME_MS = 5.0


def obs_topic(device_id: int) -> str:
    return f"pendulum/{device_id}/observations"


def act_topic(device_id: int) -> str:
    return f"pendulum/{device_id}/actions"


@dataclass
class DeviceConfig:
    device_id: int = 0
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    firmware: FirmwareConfig = field(default_factory=FirmwareConfig)
    initial: PendulumState = field(default_factory=PendulumState)


class _Device:
    def __init__(self, cfg: DeviceConfig, service: "RigService"):
        self.cfg = cfg
        self.service = service
        self.state = replace(cfg.initial, t=service.scheduler.now / 1000.0)
        self.firmware = Firmware(
            cfg.firmware,
            read_angle=lambda: self.state.theta,
            publish=lambda line: service.broker.publish(obs_topic(cfg.device_id), line.encode()),
        )
        self.obs_published = 0
        # The emulated MCU is itself a subscriber on its actions topic;
        # deliveries drain straight into the firmware's message handler.
        self.action_sub = Subscriber(capacity=64, sink=self._on_action_delivery)
        service.broker.subscribe(act_topic(cfg.device_id), self.action_sub)

    def _on_action_delivery(self, sub: Subscriber) -> None:
        for _topic, payload in sub.drain():
            self.firmware.on_message(payload.decode("utf-8", errors="replace"))

    def servo_target_rad(self) -> float:
        return self.firmware.state.servo_command * self.cfg.physics.phi_max

    def start(self) -> None:
        sched = self.service.scheduler
        sched.every(FRAME_MS, self._frame, PRIO_PHYSICS, phase_ms=FRAME_MS)
        self._schedule_obs(sched.now)
        self._schedule_act(sched.now + ACT_PHASE_MS)

    def _frame(self) -> None:
        self.state = step_frame(self.state, self.servo_target_rad(), self.cfg.physics)

    def _schedule_obs(self, deadline: float) -> None:
        sched = self.service.scheduler

        def tick() -> None:
            line = self.firmware.obs_tick(int(round(sched.now)))
            if line is not None:
                self.obs_published += 1
            self._schedule_obs(deadline + float(self.firmware.cfg.obs_interval_ms))

        sched.call_at(deadline, tick, PRIO_OBS)

    def _schedule_act(self, deadline: float) -> None:
        sched = self.service.scheduler

        def tick() -> None:
            self.firmware.act_tick()
            self._schedule_act(deadline + float(self.firmware.cfg.act_interval_ms))

        sched.call_at(deadline, tick, PRIO_ACT)


class RigService:
    """Broker plus devices on a shared clock.

    ``clock_mode`` is ``"virtual"`` (client-paced, starts at t=0),
    ``"real"`` (wall speed) or ``"accel:<factor>"``.  Wall-tracking modes
    anchor the simulated clock at the Unix epoch time of :meth:`start`, so
    firmware timestamps are comparable with client wall clocks on the same
    host.
    """

    def __init__(self, devices: List[DeviceConfig], clock_mode: str = "virtual"):
        self.clock_mode, self.speed = _parse_clock_mode(clock_mode)
        start_ms = 0.0 if self.clock_mode == "virtual" else time.time() * 1000.0
        self.scheduler = Scheduler(start_ms)
        self.broker = Broker(self.scheduler)
        self.devices: Dict[int, _Device] = {}
        for dc in devices:
            if dc.device_id in self.devices:
                raise ValueError(f"duplicate device id {dc.device_id}")
            self.devices[dc.device_id] = _Device(dc, self)
        self._inbox: "queue.Queue" = queue.Queue()
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._started = False
        self._threaded = False
        self._lock = threading.Lock()

    # -- lifecycle -------------------------------------------------------

    def start(self, threaded: Optional[bool] = None) -> None:
        """Arm device cadences; spawn the driver thread when needed.

        Virtual-mode services used in-process (loopback sessions on the
        caller's thread) run unthreaded; anything wall-tracking, or served
        over TCP, runs its core on a dedicated thread.
        """
        if self._started:
            return
        self._started = True
        for dev in self.devices.values():
            dev.start()
        self.scheduler.advance(self.scheduler.now)  # fire t=0 events (initial observation)
        self._threaded = self.clock_mode != "virtual" if threaded is None else threaded
        if self._threaded:
            self._thread = threading.Thread(target=self._run, name="rig-core", daemon=True)
            self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._inbox.put(None)
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    # -- core-context operations ----------------------------------------

    def advance_ms(self, dt_ms: float) -> float:
        """Move simulated time forward; returns the new now.  Core context only."""
        if dt_ms < 0:
            raise ValueError("cannot advance by a negative amount")
        self.scheduler.advance(self.scheduler.now + dt_ms)
        return self.scheduler.now

    def client_publish(self, topic: str, payload: bytes) -> None:
        """Handle a PUBLISH from a client session.  Core context only."""
        if topic == CLOCK_TOPIC:
            self._handle_clock(payload)
            return
        self.broker.publish(topic, payload)
        # Flush zero-delay deliveries so a command published "now" is in the
        # firmware inbox before the caller's next advance or sleep.
        self.scheduler.advance(self.scheduler.now)

    def client_subscribe(self, topic: str, sub: Subscriber) -> None:
        self.broker.subscribe(topic, sub)

    def client_disconnect(self, sub: Subscriber) -> None:
        self.broker.remove_subscriber(sub)

    def _handle_clock(self, payload: bytes) -> None:
        text = payload.decode("utf-8", errors="replace")
        if text.startswith("advance:"):
            try:
                dt = float(text.split(":", 1)[1])
            except ValueError:
                dt = 0.0
            if self.clock_mode == "virtual" and dt > 0:
                self.advance_ms(dt)
        # "get" and wall-tracking modes just acknowledge with the current time.
        self.broker.publish(CLOCK_ACK_TOPIC, f"advanced:{self.scheduler.now:.3f}".encode())
        self.scheduler.advance(self.scheduler.now)

    # -- cross-thread ingress -------------------------------------------

    def post(self, fn: Callable[[], None]) -> None:
        """Queue a closure for the core thread (threaded services only)."""
        self._inbox.put(fn)

    def call_sync(self, fn: Callable[[], object], timeout: float = 10.0):
        """Run a closure on the core thread and wait for its result."""
        if not self._threaded:
            return fn()
        done = threading.Event()
        box: list = [None, None]

        def wrapper() -> None:
            try:
                box[0] = fn()
            except Exception as exc:  # propagate to caller
                box[1] = exc
            done.set()

        self._inbox.put(wrapper)
        if not done.wait(timeout):
            raise TimeoutError("rig core did not respond")
        if box[1] is not None:
            raise box[1]
        return box[0]

    def _run(self) -> None:
        """Driver loop: track the wall clock (or idle, for threaded virtual)."""
        epoch = time.monotonic()
        base = self.scheduler.now
        while not self._stop.is_set():
            if self.clock_mode != "virtual":
                target = base + (time.monotonic() - epoch) * 1000.0 * self.speed
                if target > self.scheduler.now:
                    self.scheduler.advance(target)
                nxt = self.scheduler.next_deadline()
                wait = 0.05 if nxt is None else max(0.0, (nxt - self.scheduler.now) / (1000.0 * self.speed))
                wait = min(wait, 0.05)
            else:
                wait = None  # virtual: sleep until a client posts work
            try:
                item = self._inbox.get(timeout=wait)
            except queue.Empty:
                continue
            if item is None:
                break
            item()


def _parse_clock_mode(mode: str):
    if mode == "virtual":
        return "virtual", 0.0
    if mode == "real":
        return "real", 1.0
    if mode.startswith("accel:"):
        try:
            factor = float(mode.split(":", 1)[1])
        except ValueError:
            factor = math.nan
        if not (math.isfinite(factor) and factor > 0):
            raise ConfigError(f"bad acceleration factor in clock mode {mode!r}")
        return "accel", factor
    raise ConfigError(f"unknown clock mode {mode!r} (virtual | real | accel:<factor>)")


class LoopbackSession:
    """In-process client session: same surface as the socket client.

    On an unthreaded virtual rig everything runs inline on the caller's
    thread and :meth:`sleep_ms` advances the simulated clock directly.  On
    a threaded rig, calls hop to the core thread and :meth:`sleep_ms`
    either requests an advance (virtual) or sleeps on the wall clock
    scaled by the rig speed.
    """

    def __init__(self, service: RigService):
        self.service = service
        self.subscriber = Subscriber(capacity=1024, sink=self._drain)
        self._callbacks: Dict[str, Callable[[str, bytes], None]] = {}
        self.closed = False

    def _drain(self, sub: Subscriber) -> None:
        for topic, payload in sub.drain():
            cb = self._callbacks.get(topic)
            if cb is not None:
                cb(topic, payload)

    def publish(self, topic: str, payload: bytes) -> None:
        svc = self.service
        if svc._threaded:
            svc.call_sync(lambda: svc.client_publish(topic, payload))
        else:
            svc.client_publish(topic, payload)

    def subscribe(self, topic: str, callback: Callable[[str, bytes], None]) -> None:
        self._callbacks[topic] = callback
        svc = self.service
        if svc._threaded:
            svc.call_sync(lambda: svc.client_subscribe(topic, self.subscriber))
        else:
            svc.client_subscribe(topic, self.subscriber)

    def now_ms(self) -> float:
        return self.service.scheduler.now

    def sleep_ms(self, ms: float) -> None:
        svc = self.service
        if svc.clock_mode == "virtual":
            if svc._threaded:
                svc.call_sync(lambda: svc.advance_ms(ms))
            else:
                svc.advance_ms(ms)
        else:
            time.sleep(ms / 1000.0 / svc.speed)

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        svc = self.service
        if svc._threaded:
            try:
                svc.call_sync(lambda: svc.client_disconnect(self.subscriber))
            except TimeoutError:
                pass
        else:
            svc.client_disconnect(self.subscriber)
