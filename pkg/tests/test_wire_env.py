"""Wire-attached environment: loopback and TCP sessions against a virtual rig."""

import math

import numpy as np
import pytest

from pendulum_rig.config import ConfigError, EnvSettings
from pendulum_rig.env import (
    PendulumSimEnv,
    PendulumWireEnv,
    StaleObservationError,
)
from pendulum_rig.firmware import FirmwareConfig, Mode
from pendulum_rig.rig import DeviceConfig, LoopbackSession, RigService, act_topic, obs_topic
from pendulum_rig.transport.broker import ChannelFault
from pendulum_rig.transport.tcp import RigServer, TcpSession


def _loopback_env(settings=None, device_id=0, fault=None, devices=None):
    service = RigService(devices or [DeviceConfig()], clock_mode="virtual")
    if fault is not None:
        service.broker.set_fault(obs_topic(0), fault)
    service.start(threaded=False)
    session = LoopbackSession(service)
    env = PendulumWireEnv(session, settings, device_id=device_id)
    return service, session, env


# -- basic stepping -------------------------------------------------------

def test_reset_observes_the_hanging_pendulum():
    _, _, env = _loopback_env()
    vector, info = env.reset()
    assert info["count"] == 0
    assert info["theta_up"] == -math.pi
    # Freshness is bounded by the stock firmware's 14 ms streaming period.
    assert 0.0 <= info["age_ms"] < 14.0
    assert vector.shape == (env.observation_size,)
    assert np.all(np.isfinite(vector))


def test_step_returns_the_gym_tuple():
    _, _, env = _loopback_env()
    env.reset()
    vector, reward, terminated, truncated, info = env.step(2)
    assert vector.shape == (env.observation_size,)
    assert reward <= 0.0
    assert terminated is False and truncated is False
    assert info["step"] == 1


def test_observations_stream_while_the_env_waits():
    # Default pacing sleeps 56 ms against the stock 14 ms streaming period,
    # so every step sees exactly four new lines arrive.
    _, _, env = _loopback_env()
    env.reset()
    before = env.observations_received
    deltas = []
    for _ in range(30):
        env.step(0)
        now = env.observations_received
        deltas.append(now - before)
        before = now
    assert deltas == [4] * 30


# -- latency telemetry ----------------------------------------------------

def test_age_telemetry_reflects_injected_latency():
    # A 50 ms delivery fault on the observation channel. The default 56 ms
    # step is a multiple of the 14 ms streaming period, so the sampling
    # phase locks and the use-time age is a deterministic constant in
    # [latency, latency + period).
    fault = ChannelFault(base_latency_ms=50.0)
    _, _, env = _loopback_env(fault=fault)
    env.reset()
    ages = [env.step(0)[4]["age_ms"] for _ in range(100)]
    assert ages == [52.0] * 100


def test_latency_recovered_by_differencing_against_a_clean_baseline():
    # 57 ms pacing is co-prime with the 14 ms streaming period, so the
    # sampling phase sweeps uniformly and the staleness component is the
    # same with and without the fault; differencing isolates the latency.
    settings = EnvSettings(step_time_ms=57.0)
    _, _, env = _loopback_env(settings, fault=ChannelFault(base_latency_ms=50.0))
    env.reset()
    faulted = [env.step(0)[4]["age_ms"] for _ in range(140)]
    _, _, clean = _loopback_env(EnvSettings(step_time_ms=57.0))
    clean.reset()
    baseline = [clean.step(0)[4]["age_ms"] for _ in range(140)]
    recovered = np.mean(faulted) - np.mean(baseline)
    assert recovered == pytest.approx(50.0, abs=0.5)


def test_age_without_faults_is_bounded_by_the_observation_cadence():
    _, _, env = _loopback_env()
    env.reset()
    ages = [env.step(0)[4]["age_ms"] for _ in range(30)]
    assert all(0.0 <= a < 14.0 for a in ages)


# -- robustness -----------------------------------------------------------

def test_garbage_observations_are_skipped_and_counted():
    _, session, env = _loopback_env()
    env.reset()
    session.publish(obs_topic(0), b"not an observation")
    session.publish(obs_topic(0), b"1,2,3")  # wrong arity
    assert env.parse_errors == 2
    vector, reward, _, _, info = env.step(0)
    assert np.all(np.isfinite(vector))
    assert info["count"] == 0  # still resting: corrupt lines never landed
    assert env.parse_errors == 2  # healthy lines do not bump the counter


def test_stopping_the_stream_raises_stale():
    _, session, env = _loopback_env(EnvSettings(stale_limit_ms=30.0))
    env.reset()
    env.step(0)
    session.publish(act_topic(0), b"cfg:stream=0")
    with pytest.raises(StaleObservationError):
        env.step(0)


def test_absent_device_raises_stale_on_reset():
    _, _, env = _loopback_env(device_id=3)
    with pytest.raises(StaleObservationError):
        env.reset()


def test_wire_env_rejects_simulator_only_settings():
    service = RigService([DeviceConfig()], clock_mode="virtual")
    service.start(threaded=False)
    session = LoopbackSession(service)
    with pytest.raises(ConfigError):
        PendulumWireEnv(session, EnvSettings(delay="delayed"))
    with pytest.raises(ConfigError):
        PendulumWireEnv(session, EnvSettings(randomize_init=True))


def test_env_switches_firmware_mode_on_connect():
    service, _, _env = _loopback_env(EnvSettings(mode="continuous"))
    assert service.devices[0].firmware.cfg.mode is Mode.CONTINUOUS
    service2, _, _env2 = _loopback_env()
    assert service2.devices[0].firmware.cfg.mode is Mode.DISCRETE


# -- transports agree -----------------------------------------------------

def test_tcp_session_matches_loopback_bit_for_bit():
    actions = list(np.random.default_rng(42).integers(0, 5, size=20))

    _, _, loop_env = _loopback_env()
    loop_out = [loop_env.reset()[0]] + [loop_env.step(a) for a in actions]

    service = RigService([DeviceConfig()], clock_mode="virtual")
    server = RigServer(service)
    server.start()
    try:
        session = TcpSession(server.host, server.port, clock_mode="virtual")
        env = PendulumWireEnv(session)
        tcp_out = [env.reset()[0]] + [env.step(a) for a in actions]
        np.testing.assert_array_equal(loop_out[0], tcp_out[0])
        for (lv, lr, *_), (tv, tr, *_) in zip(loop_out[1:], tcp_out[1:]):
            np.testing.assert_array_equal(lv, tv)
            assert lr == tr
        env.close()
    finally:
        server.stop()


def test_wire_loopback_matches_the_direct_simulator():
    # On a frame-aligned rig (15 ms observations, 60 ms acting) with 60 ms
    # pacing, actions land exactly on the acting grid and the two
    # environments agree to the last encoder count.
    actions = list(np.random.default_rng(7).integers(0, 5, size=100))

    aligned = DeviceConfig(firmware=FirmwareConfig(obs_interval_ms=15, act_interval_ms=60))
    _, _, wire = _loopback_env(EnvSettings(step_time_ms=60.0), devices=[aligned])
    sim = PendulumSimEnv(EnvSettings())

    wire_vec, wire_info = wire.reset()
    sim_vec, sim_info = sim.reset()
    assert wire_info["count"] == sim_info["count"]
    np.testing.assert_array_equal(wire_vec, sim_vec)

    for a in actions:
        wv, wr, _, _, wi = wire.step(a)
        sv, sr, _, _, si = sim.step(a)
        assert wi["count"] == si["count"]
        assert wi["t_ms"] == si["t_ms"]
        assert wr == sr
        np.testing.assert_array_equal(wv, sv)
