"""Operator command line for the virtual pendulum rig.

Subcommands:

* ``rig``    -- serve emulated devices over TCP until interrupted.
* ``train``  -- run a learning algorithm against a simulated or wire
  environment, writing learning curve, run manifest and policy weights.
* ``eval``   -- roll out a saved policy (or the built-in reference
  controller) and report control quality.
* ``bench``  -- measure observation cadence, observation age at use and
  action-to-effect latency of a rig.
* ``script`` -- deterministic wire-protocol run emitting JSON to stdout;
  serves as the reference side for cross-implementation checks.

Exit codes: 0 on success, 1 on runtime failure (lost connection, stale
observations, rig errors), 2 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import signal
import statistics
import sys
import threading
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .agents.dqn import DQNAgent
from .agents.nets import load_params, save_params
from .agents.td3 import TD3Agent
from .agents.training import (
    Trainer,
    evaluate,
    make_encoder,
    make_manifest,
    write_manifest,
)
from .config import ConfigError, EnvSettings, Settings, TrainSettings, load_settings
from .env import (
    EnvError,
    ObservationVector,
    PendulumSimEnv,
    PendulumWireEnv,
)
from .expert import ReferenceController
from .firmware import FirmwareConfig, Mode
from .physics import PendulumState
from .rig import DeviceConfig, LoopbackSession, RigService, act_topic, obs_topic
from .transport.frames import KIND_CONNECT, KIND_PUBLISH, KIND_SUBSCRIBE, encode_frame
from .transport.tcp import RigServer, TcpSession

ENV_VARIANTS = ("sim", "sim-delayed", "wire")


# ---------------------------------------------------------------------------
# shared plumbing


def _host_port(text: str) -> Tuple[str, int]:
    """Parse ``host:port`` (or bare ``:port`` / ``port``) into a tuple."""
    host, sep, port_text = text.rpartition(":")
    if not sep:
        host, port_text = "127.0.0.1", text
    if not host:
        host = "127.0.0.1"
    try:
        port = int(port_text)
    except ValueError:
        raise ConfigError(f"bad broker address {text!r}: port must be an integer") from None
    if not 0 < port < 65536:
        raise ConfigError(f"bad broker address {text!r}: port out of range")
    return host, port


def _settings_from(args: argparse.Namespace) -> Settings:
    """Load the TOML settings file when given, else defaults."""
    if getattr(args, "config", None):
        return load_settings(args.config)
    return Settings()


def _firmware_for(settings: Settings) -> FirmwareConfig:
    mode = Mode.DISCRETE if settings.env.mode == "discrete" else Mode.CONTINUOUS
    cfg = FirmwareConfig(
        obs_interval_ms=settings.rig.obs_interval_ms,
        act_interval_ms=settings.rig.act_interval_ms,
        mode=mode,
    )
    cfg.validate()
    return cfg


def _device_configs(settings: Settings) -> List[DeviceConfig]:
    physics = settings.rig.physics_params()
    firmware = _firmware_for(settings)
    return [
        DeviceConfig(device_id=i, physics=physics, firmware=firmware, initial=PendulumState())
        for i in settings.rig.device_ids
    ]


def _apply_faults(service: RigService, settings: Settings) -> None:
    for device_id in settings.rig.device_ids:
        if settings.rig.action_fault is not None:
            service.broker.set_fault(act_topic(device_id), settings.rig.action_fault)
        if settings.rig.observation_fault is not None:
            service.broker.set_fault(obs_topic(device_id), settings.rig.observation_fault)


def _open_session(
    settings: Settings, broker: Optional[str], clock: Optional[str]
) -> Tuple[Any, Callable[[], None]]:
    """Connect to a remote rig, or self-host a loopback one.

    Returns ``(session, cleanup)``.  Self-hosted rigs default to the
    virtual clock so runs are deterministic and faster than wall time.
    """
    if broker:
        host, port = _host_port(broker)
        session = TcpSession(host, port, clock_mode=clock or "virtual")
        return session, session.close
    service = RigService(_device_configs(settings), clock_mode=clock or "virtual")
    _apply_faults(service, settings)
    service.start()
    session = LoopbackSession(service)

    def cleanup() -> None:
        session.close()
        service.stop()

    return session, cleanup


def _build_env(
    variant: str,
    settings: Settings,
    broker: Optional[str],
    clock: Optional[str],
    seed: Optional[int],
) -> Tuple[Any, Callable[[], None]]:
    """Build the requested environment variant; returns ``(env, cleanup)``."""
    if variant not in ENV_VARIANTS:
        raise ConfigError(f"env variant must be one of {', '.join(ENV_VARIANTS)}; got {variant!r}")
    env_settings = dataclasses.replace(settings.env)
    if variant == "wire":
        env_settings.delay = "none"
        env_settings.randomize_init = False
        session, cleanup = _open_session(settings, broker, clock)
        try:
            env = PendulumWireEnv(session, env_settings)
        except Exception:
            cleanup()
            raise
        return env, cleanup
    env_settings.delay = "delayed" if variant == "sim-delayed" else "none"
    env = PendulumSimEnv(env_settings, physics=settings.rig.physics_params(), seed=seed)
    return env, env.close


def _step_seconds(env: Any) -> float:
    """Nominal wall/rig seconds represented by one environment step."""
    if isinstance(env, PendulumSimEnv):
        return env.delay.pre_frames * env.physics.frame_dt
    return env.settings.step_time_ms / 1000.0


# ---------------------------------------------------------------------------
# policy persistence


def save_policy(path: str, agent: Any, settings: Settings, obs_dim: int, n_actions: int) -> None:
    """Write network weights plus the metadata needed to reload them."""
    cfg = settings.train
    meta = {
        "algo": cfg.algo,
        "obs_dim": obs_dim,
        "n_actions": n_actions,
        "hidden": cfg.hidden,
        "gru_hidden": cfg.gru_hidden,
        "seed": cfg.seed,
        "env_settings": json.dumps(dataclasses.asdict(settings.env)),
        "physics": json.dumps(settings.rig.physics),
    }
    save_params(path, agent.nets(), meta)


def load_policy(path: str):
    """Rebuild ``(agent, encoder, algo, env_settings, physics_overrides)``.

    The encoder is reconstructed from the stored seed, so recurrent
    policies replay with exactly the feature encoding they trained on.
    """
    nets, raw_meta = load_params(path)
    meta = {key: value.item() for key, value in raw_meta.items() if value.ndim == 0}
    algo = str(meta["algo"])
    obs_dim = int(meta["obs_dim"])
    n_actions = int(meta["n_actions"])
    cfg = TrainSettings(
        algo=algo,
        hidden=int(meta["hidden"]),
        gru_hidden=int(meta["gru_hidden"]),
        seed=int(meta["seed"]),
    ).validate()
    env_settings = EnvSettings(**json.loads(str(meta["env_settings"]))).validate()
    physics = json.loads(str(meta["physics"]))
    encoder = make_encoder(algo, obs_dim, cfg, cfg.seed)
    if algo in ("dqn", "rdqn"):
        agent = DQNAgent(encoder.output_dim, n_actions, cfg, seed=cfg.seed)
    else:
        agent = TD3Agent(encoder.output_dim, cfg, seed=cfg.seed)
    agent.load_nets(nets)
    return agent, encoder, algo, env_settings, physics


# ---------------------------------------------------------------------------
# rig


def cmd_rig(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    if args.devices is not None:
        if args.devices < 1:
            raise ConfigError("--devices must be >= 1")
        settings.rig.device_ids = list(range(args.devices))
    if args.clock:
        settings.rig.clock_mode = args.clock
    if args.host:
        settings.rig.host = args.host
    if args.port is not None:
        settings.rig.port = args.port

    service = RigService(_device_configs(settings), clock_mode=settings.rig.clock_mode)
    _apply_faults(service, settings)
    server = RigServer(service, host=settings.rig.host, port=settings.rig.port)
    server.start()

    stop = threading.Event()

    def _request_stop(_signum, _frame) -> None:
        stop.set()

    # Handlers go in before the ready message so an interrupt that arrives
    # the moment a caller sees the message is always a clean shutdown.
    previous = {
        sig: signal.signal(sig, _request_stop)
        for sig in (signal.SIGINT, signal.SIGTERM)
    }
    print(f"rig listening on {server.host}:{server.port} (clock {settings.rig.clock_mode})")
    for device_id in settings.rig.device_ids:
        print(f"  device {device_id}: observations on {obs_topic(device_id)!r}, "
              f"actions on {act_topic(device_id)!r}")
    print("  clock control on 'rig/clock' (acknowledgements on 'rig/clock/ack')")
    print("press Ctrl-C to stop")
    try:
        while not stop.wait(timeout=0.2):
            pass
    finally:
        for sig, handler in previous.items():
            signal.signal(sig, handler)
        server.stop()
    print("rig stopped")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    cfg = settings.train
    if args.algo:
        cfg.algo = args.algo
    if args.episodes is not None:
        cfg.episodes = args.episodes
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    if args.stop_return is not None:
        cfg.stop_return = args.stop_return
    if args.async_learner:
        cfg.async_learner = True
    if args.randomize_init:
        settings.env.randomize_init = True
    cfg.validate()
    settings.env.mode = "continuous" if cfg.algo in ("td3", "rtd3") else "discrete"

    env, cleanup = _build_env(args.env, settings, args.broker, args.clock, seed=cfg.seed)
    started = time.time()
    try:
        trainer = Trainer(env, cfg)
        obs_dim, n_actions = env.observation_size, env.n_actions
        print(f"training {cfg.algo} on {args.env} "
              f"(episodes {cfg.episodes}, seed {cfg.seed}, "
              f"{'async' if cfg.async_learner else 'sync'} learner)")
        curve = trainer.run()
    finally:
        cleanup()
    finished = time.time()

    manifest = make_manifest(
        cfg.algo, args.env, settings.to_dict(), cfg.seed, started, finished,
        status=curve.status,
        extra={
            "episodes_run": len(curve.records),
            "env_steps": curve.env_steps,
            "updates": curve.updates,
            "rolling_per_step": curve.rolling_per_step(),
            "best_return": max(curve.returns(), default=float("nan")),
            "files": {"curve": "curve.csv", "policy": "policy.npz", "manifest": "manifest.json"},
        },
    )
    run_dir = os.path.join(cfg.out_dir, manifest["run_id"])
    os.makedirs(run_dir, exist_ok=True)
    curve.write_csv(os.path.join(run_dir, "curve.csv"))
    save_policy(os.path.join(run_dir, "policy.npz"), trainer.agent, settings, obs_dim, n_actions)
    write_manifest(os.path.join(run_dir, "manifest.json"), manifest)

    last = curve.records[-1] if curve.records else None
    print(f"run {manifest['run_id']}: {len(curve.records)} episodes, "
          f"{curve.env_steps} env steps, {curve.updates} updates, status {curve.status}")
    if last is not None:
        print(f"  final episode return {last.ret:.3f} ({last.per_step:.4f}/step); "
              f"rolling per-step {curve.rolling_per_step():.4f}")
    print(f"  artifacts in {run_dir}")
    return 0 if curve.status in ("completed", "early_stop") else 1


# ---------------------------------------------------------------------------
# eval


def _observation_from_info(info: Dict[str, Any]) -> ObservationVector:
    return ObservationVector(
        t_ms=info["t_ms"], count=info["count"], servo=info["servo"],
        pend_vel=info["pend_vel"], pend_acc=info["pend_acc"], arm_vel=info["arm_vel"],
    )


def _reference_rollouts(env: Any, episodes: int) -> List[Dict[str, Any]]:
    """Roll out the scripted controller; same result schema as ``evaluate``."""
    results = []
    for _ in range(episodes):
        controller = ReferenceController()
        _vector, info = env.reset()
        ret, steps = 0.0, 0
        upright_late, late_steps = 0, 0
        time_to_upright: Optional[int] = None
        while True:
            action = controller.action(_observation_from_info(info))
            _vector, reward, terminated, truncated, info = env.step(action)
            ret += reward
            steps += 1
            upright = abs(info["theta_up"]) < 0.2
            if upright and time_to_upright is None:
                time_to_upright = steps
            if steps >= 100:
                late_steps += 1
                if upright:
                    upright_late += 1
            if terminated or truncated:
                break
        results.append({
            "return": ret,
            "steps": steps,
            "per_step": ret / steps if steps else 0.0,
            "time_to_upright": time_to_upright,
            "upright_fraction_late": upright_late / late_steps if late_steps else 0.0,
        })
    return results


def _print_eval_report(results: List[Dict[str, Any]], step_seconds: float) -> None:
    for i, res in enumerate(results):
        tu = res["time_to_upright"]
        reached = f"{tu} steps ({tu * step_seconds:.2f} s)" if tu is not None else "never"
        print(f"  episode {i + 1}: return {res['return']:.3f} "
              f"({res['per_step']:.4f}/step), first upright {reached}, "
              f"upright after step 100: {res['upright_fraction_late'] * 100.0:.1f}%")
    returns = [r["return"] for r in results]
    per_steps = [r["per_step"] for r in results]
    reached = [r["time_to_upright"] for r in results if r["time_to_upright"] is not None]
    print(f"mean return {statistics.fmean(returns):.3f} "
          f"(per-step {statistics.fmean(per_steps):.4f})")
    if reached:
        med = statistics.median(reached)
        print(f"time to upright: median {med:.0f} steps ({med * step_seconds:.2f} s), "
              f"reached in {len(reached)}/{len(results)} episodes")
    else:
        print(f"time to upright: never reached in {len(results)} episodes")
    late = statistics.fmean(r["upright_fraction_late"] for r in results)
    print(f"mean upright fraction after step 100: {late * 100.0:.1f}%")


def cmd_eval(args: argparse.Namespace) -> int:
    if args.reference and args.policy:
        raise ConfigError("give either --policy or --reference, not both")
    if not args.reference and not args.policy:
        raise ConfigError("one of --policy or --reference is required")

    settings = _settings_from(args)
    agent = encoder = None
    if args.policy:
        if not os.path.isfile(args.policy):
            raise ConfigError(f"policy file not found: {args.policy}")
        agent, encoder, algo, env_settings, physics = load_policy(args.policy)
        if not args.config:
            settings.env = env_settings
            settings.rig.physics = physics
        label = f"policy {args.policy} ({algo})"
    else:
        settings.env.mode = "discrete"
        label = "reference controller"
    if args.randomize_init:
        settings.env.randomize_init = True

    env, cleanup = _build_env(args.env, settings, args.broker, args.clock, seed=args.seed)
    try:
        print(f"evaluating {label} on {args.env}, {args.episodes} episodes")
        if args.reference:
            results = _reference_rollouts(env, args.episodes)
        else:
            results = evaluate(env, agent, encoder, episodes=args.episodes)
        _print_eval_report(results, _step_seconds(env))
    finally:
        cleanup()
    return 0


# ---------------------------------------------------------------------------
# bench


def _percentile(values: List[float], q: float) -> float:
    return float(np.percentile(np.asarray(values, dtype=float), q))


def cmd_bench(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    session, cleanup = _open_session(settings, args.broker, args.clock)
    captured: List[Tuple[float, ObservationVector]] = []
    parse_failures = [0]

    def on_obs(_topic: str, payload: bytes) -> None:
        try:
            vec = ObservationVector.parse(payload.decode("utf-8", errors="replace"))
        except EnvError:
            parse_failures[0] += 1
            return
        captured.append((session.now_ms(), vec))

    try:
        session.subscribe(obs_topic(args.device), on_obs)
        action_channel = act_topic(args.device)
        session.publish(action_channel, b"cfg:stream=1")
        session.publish(action_channel, b"m0")
        session.sleep_ms(200.0)
        if not captured:
            print("error: no observations received; is the rig streaming?", file=sys.stderr)
            return 1

        # cadence window: idle and watch the stream, sampling age on the
        # control period the way an environment would use it
        window_start = len(captured)
        ages: List[float] = []
        t_end = session.now_ms() + args.duration_ms
        while session.now_ms() < t_end:
            session.sleep_ms(settings.env.step_time_ms)
            ages.append(session.now_ms() - captured[-1][1].t_ms)
        window = captured[window_start:]

        # actuation probes: command one increment, watch for the echoed
        # servo change, then stop (discrete commands repeat per act tick)
        latencies: List[float] = []
        missed_probes = 0
        for probe in range(args.probes):
            baseline = captured[-1][1].servo
            t0 = session.now_ms()
            session.publish(action_channel, b"m3" if probe % 2 == 0 else b"m1")
            waited = 0.0
            hit = None
            while waited < 500.0:
                session.sleep_ms(5.0)
                waited += 5.0
                arrival, vec = captured[-1]
                if vec.servo != baseline:
                    hit = arrival - t0
                    break
            session.publish(action_channel, b"m0")
            if hit is None:
                missed_probes += 1
            else:
                latencies.append(hit)
            session.sleep_ms(100.0)
    finally:
        cleanup()

    duration_s = args.duration_ms / 1000.0
    print(f"observations: {len(window)} in {duration_s:.2f} s of rig time "
          f"({len(window) / duration_s:.1f} msg/s), {parse_failures[0]} unparsable")
    if len(window) >= 2:
        stamps = [vec.t_ms for _, vec in window]
        cadence = [b - a for a, b in zip(stamps, stamps[1:])]
        lag = [arrival - vec.t_ms for arrival, vec in window]
        print(f"stamp cadence: mean {statistics.fmean(cadence):.1f} ms "
              f"(min {min(cadence):.0f}, max {max(cadence):.0f})")
        print(f"delivery lag (arrival - stamp): mean {statistics.fmean(lag):.2f} ms, "
              f"p95 {_percentile(lag, 95):.2f} ms")
    if ages:
        print(f"observation age at use: mean {statistics.fmean(ages):.1f} ms, "
              f"p50 {_percentile(ages, 50):.1f}, p95 {_percentile(ages, 95):.1f}, "
              f"max {max(ages):.1f}")
    if latencies:
        print(f"action-to-effect latency: mean {statistics.fmean(latencies):.1f} ms "
              f"(min {min(latencies):.1f}, max {max(latencies):.1f}, "
              f"{len(latencies)} probes, {missed_probes} missed)")
    elif args.probes:
        print(f"action-to-effect latency: no effect observed in {args.probes} probes")

    if args.out and ages:
        bin_ms = 5.0
        top = math.ceil(max(ages) / bin_ms) * bin_ms
        edges = np.arange(0.0, top + bin_ms, bin_ms)
        counts, _ = np.histogram(np.asarray(ages), bins=edges)
        with open(args.out, "w") as fh:
            fh.write("age_bin_lo_ms,age_bin_hi_ms,count\n")
            for lo, hi, n in zip(edges[:-1], edges[1:], counts):
                fh.write(f"{lo:.1f},{hi:.1f},{int(n)}\n")
        print(f"age histogram written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# script


def _parse_actions(args: argparse.Namespace) -> List[int]:
    if args.actions_file:
        try:
            with open(args.actions_file) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read actions file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"actions file is not valid JSON: {exc}") from None
        if not isinstance(data, list):
            raise ConfigError("actions file must hold a JSON array of integers")
        items = data
    elif args.actions:
        items = [part.strip() for part in args.actions.split(",") if part.strip()]
    else:
        raise ConfigError("one of --actions or --actions-file is required")
    try:
        actions = [int(item) for item in items]
    except (TypeError, ValueError):
        raise ConfigError("actions must be integers in [0, 4]") from None
    for action in actions:
        if not 0 <= action <= 4:
            raise ConfigError(f"action {action} out of range [0, 4]")
    if not actions:
        raise ConfigError("action list is empty")
    return actions


def cmd_script(args: argparse.Namespace) -> int:
    actions = _parse_actions(args)
    settings = _settings_from(args)
    if not args.config:
        # canonical profile for cross-implementation runs: acting period,
        # step pacing and observation cadence on one aligned 60 ms grid
        settings.rig.obs_interval_ms = 15
        settings.rig.act_interval_ms = 60
        settings.env.step_time_ms = 60.0
    settings.env.mode = "discrete"
    settings.env.delay = "none"
    settings.env.randomize_init = False
    if len(actions) > settings.env.episode_steps:
        raise ConfigError(
            f"{len(actions)} actions do not fit one {settings.env.episode_steps}-step episode"
        )

    session, cleanup = _open_session(settings, args.broker, clock="virtual")
    sent: List[Tuple[str, bytes]] = []
    raw_observations: List[Tuple[float, str]] = []
    original_publish = session.publish
    action_channel = act_topic(args.device)

    def recording_publish(topic: str, payload: bytes) -> None:
        # clock-advance publishes are client pacing, not part of the trace
        if topic == action_channel:
            sent.append((topic, bytes(payload)))
        original_publish(topic, payload)

    session.publish = recording_publish  # type: ignore[method-assign]
    try:
        env = PendulumWireEnv(session, settings.env, device_id=args.device)
        observation_channel = obs_topic(args.device)
        env_on_observation = env._on_observation

        def observing(topic: str, payload: bytes) -> None:
            raw_observations.append((session.now_ms(), payload.decode("utf-8", errors="replace")))
            env_on_observation(topic, payload)

        session.subscribe(observation_channel, observing)

        handshake_count = len(sent)
        _vector, info = env.reset()
        reset_sent = sent[handshake_count:]
        steps: List[Dict[str, Any]] = []
        for action in actions:
            mark = len(sent)
            _vector, reward, _terminated, _truncated, info = env.step(action)
            frames = [
                {
                    "topic": topic,
                    "payload": payload.decode("utf-8"),
                    "frame_hex": encode_frame(KIND_PUBLISH, topic, payload).hex(),
                }
                for topic, payload in sent[mark:]
            ]
            steps.append({
                "action": action,
                "frames": frames,
                "reward": reward,
                "observation": raw_observations[-1][1],
                "t_ms": info["t_ms"],
                "count": info["count"],
                "servo": info["servo"],
                "age_ms": info["age_ms"],
            })
    finally:
        cleanup()

    def publish_frames(pairs: List[Tuple[str, bytes]]) -> List[Dict[str, Any]]:
        return [
            {
                "topic": topic,
                "payload": payload.decode("utf-8"),
                "frame_hex": encode_frame(KIND_PUBLISH, topic, payload).hex(),
            }
            for topic, payload in pairs
        ]

    document = {
        "device_id": args.device,
        "profile": {
            "obs_interval_ms": settings.rig.obs_interval_ms,
            "act_interval_ms": settings.rig.act_interval_ms,
            "step_time_ms": settings.env.step_time_ms,
            "reset_hold_ms": settings.env.reset_hold_ms,
            "mode": settings.env.mode,
        },
        "topics": {
            "observations": obs_topic(args.device),
            "actions": act_topic(args.device),
            "clock": "rig/clock",
            "clock_ack": "rig/clock/ack",
        },
        "handshake": {
            "connect_frame_hex": encode_frame(KIND_CONNECT, "").hex(),
            "subscribe_frame_hex": encode_frame(
                KIND_SUBSCRIBE, obs_topic(args.device)
            ).hex(),
            "config_frames": publish_frames(sent[:handshake_count]),
            "reset_frames": publish_frames(reset_sent),
        },
        "steps": steps,
        "return": sum(step["reward"] for step in steps),
        "observations_received": len(raw_observations),
    }
    json.dump(document, sys.stdout, indent=None if args.compact else 2)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pendulum-rig",
        description="Serve, train against, evaluate and benchmark the virtual pendulum rig.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML settings file ([rig], [env], [train] sections)")

    def add_connection(p: argparse.ArgumentParser) -> None:
        p.add_argument("--broker", metavar="HOST:PORT",
                       help="connect to a served rig instead of self-hosting a loopback one")
        p.add_argument("--clock",
                       help="client pacing: virtual, real or accel:<factor> "
                            "(must match the rig; default virtual)")
        p.add_argument("--device", type=int, default=0, help="device id (default 0)")

    p = sub.add_parser("rig", help="serve emulated devices over TCP")
    add_config(p)
    p.add_argument("--devices", type=int, help="number of devices (ids 0..N-1)")
    p.add_argument("--clock", help="rig clock: virtual, real or accel:<factor>")
    p.add_argument("--host", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, help="bind port (default 1899; 0 = ephemeral)")
    p.set_defaults(func=cmd_rig)

    p = sub.add_parser("train", help="train an agent and save curve, manifest and policy")
    add_config(p)
    add_connection(p)
    p.add_argument("--algo", choices=("dqn", "rdqn", "td3", "rtd3"))
    p.add_argument("--env", choices=ENV_VARIANTS, default="sim",
                   help="environment variant (default sim)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output root; artifacts land in <out>/<run_id>/")
    p.add_argument("--stop-return", type=float,
                   help="stop early once the rolling per-step reward reaches this")
    p.add_argument("--async", dest="async_learner", action="store_true",
                   help="learn on a separate thread instead of lockstep")
    p.add_argument("--randomize-init", action="store_true",
                   help="randomize initial pendulum state (sim variants only)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="roll out a saved policy or the reference controller")
    add_config(p)
    add_connection(p)
    p.add_argument("--policy", help="policy .npz written by train")
    p.add_argument("--reference", action="store_true",
                   help="use the built-in scripted controller instead of a saved policy")
    p.add_argument("--env", choices=ENV_VARIANTS, default="sim",
                   help="environment variant (default sim)")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--randomize-init", action="store_true",
                   help="randomize initial pendulum state (sim variants only)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="measure cadence, observation age and actuation latency")
    add_config(p)
    add_connection(p)
    p.add_argument("--duration-ms", type=float, default=3000.0,
                   help="length of the cadence window in rig milliseconds")
    p.add_argument("--probes", type=int, default=20,
                   help="number of action-to-effect probes")
    p.add_argument("--out", help="write the observation-age histogram to this CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("script",
                       help="deterministic reference run: actions in, JSON trace out")
    add_config(p)
    p.add_argument("--broker", metavar="HOST:PORT",
                   help="run against a served rig (must use the virtual clock)")
    p.add_argument("--device", type=int, default=0)
    p.add_argument("--actions", help="comma-separated action indices, e.g. 0,3,3,1")
    p.add_argument("--actions-file", help="JSON file holding an array of action indices")
    p.add_argument("--compact", action="store_true", help="single-line JSON output")
    p.set_defaults(func=cmd_script)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except (EnvError, ConnectionError, TimeoutError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
