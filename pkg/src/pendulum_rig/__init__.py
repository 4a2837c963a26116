"""Software twin of a rotary swing-up pendulum rig.

Analytic physics stepped in fixed 5 ms frames, an emulated microcontroller
with quantised sensing and safety overrides, a lightweight pub/sub broker
with fault injection, Gym-style environments over the wire and direct, and
a small from-scratch deep RL suite to drive them.
"""

from .config import ConfigError, EnvSettings, RigSettings, Settings, TrainSettings, load_settings
from .env import (
    EnvError,
    ObservationVector,
    PendulumSimEnv,
    PendulumWireEnv,
    StaleObservationError,
    build_features,
    reward_from,
    theta_up_from_count,
)
from .expert import ReferenceController
from .firmware import Firmware, FirmwareConfig, Mode
from .physics import DelayModel, PendulumState, PhysicsParams, step_frame, step_frames
from .rig import DeviceConfig, LoopbackSession, RigService
from .transport.broker import Broker, ChannelFault, Subscriber
from .transport.frames import Frame, FrameDecoder, FramingError, encode_frame
from .transport.tcp import RigServer, TcpSession

__version__ = "0.1.0"

__all__ = [
    "Broker",
    "ChannelFault",
    "ConfigError",
    "DelayModel",
    "DeviceConfig",
    "EnvError",
    "EnvSettings",
    "Firmware",
    "FirmwareConfig",
    "Frame",
    "FrameDecoder",
    "FramingError",
    "LoopbackSession",
    "Mode",
    "ObservationVector",
    "PendulumSimEnv",
    "PendulumState",
    "PendulumWireEnv",
    "PhysicsParams",
    "ReferenceController",
    "RigServer",
    "RigService",
    "RigSettings",
    "Settings",
    "StaleObservationError",
    "Subscriber",
    "TcpSession",
    "TrainSettings",
    "build_features",
    "encode_frame",
    "load_settings",
    "reward_from",
    "step_frame",
    "step_frames",
    "theta_up_from_count",
    "__version__",
]
