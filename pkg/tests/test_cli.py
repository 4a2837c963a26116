"""Operator command line: every subcommand exercised in-process or as a child."""

import json
import os
import queue
import re
import signal
import subprocess
import sys
import threading
import time

import numpy as np
import pytest

from pendulum_rig.cli import load_policy, main
from pendulum_rig.config import EnvSettings
from pendulum_rig.env import ObservationVector, PendulumSimEnv
from pendulum_rig.rig import DeviceConfig, RigService, act_topic, obs_topic
from pendulum_rig.transport.frames import KIND_PUBLISH, encode_frame
from pendulum_rig.transport.tcp import RigServer, TcpSession

TINY_CONFIG = """
[env]
episode_steps = 40

[train]
episodes = 2
warmup_steps = 10
batch_size = 8
buffer_capacity = 500
hidden = 32
eps_decay_steps = 200
"""


@pytest.fixture(scope="module")
def tiny_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.toml"
    path.write_text(TINY_CONFIG)
    return str(path)


@pytest.fixture(scope="module")
def tiny_run(tiny_cfg, tmp_path_factory):
    """A real (tiny) training run; shared by the artifact and eval tests."""
    out = tmp_path_factory.mktemp("runs")
    rc = main(["train", "--config", tiny_cfg, "--algo", "dqn",
               "--seed", "7", "--out", str(out)])
    assert rc == 0
    (run_dir,) = list(out.iterdir())
    return run_dir


# ---------------------------------------------------------------------------
# train


def test_train_writes_curve_policy_and_manifest(tiny_run):
    names = sorted(p.name for p in tiny_run.iterdir())
    assert names == ["curve.csv", "manifest.json", "policy.npz"]

    lines = (tiny_run / "curve.csv").read_text().strip().splitlines()
    assert lines[0] == "episode,return,steps,wall_ms"
    assert len(lines) == 3  # header + 2 episodes
    for index, line in enumerate(lines[1:]):
        episode, ret, steps, wall = line.split(",")
        assert int(episode) == index
        float(ret)
        assert int(steps) == 40
        assert float(wall) >= 0.0

    manifest = json.loads((tiny_run / "manifest.json").read_text())
    assert manifest["algorithm"] == "dqn"
    assert manifest["env_variant"] == "sim"
    assert manifest["seed"] == 7
    assert manifest["status"] == "completed"
    assert manifest["episodes_run"] == 2
    assert manifest["env_steps"] == 80
    assert manifest["config"]["train"]["episodes"] == 2
    assert manifest["config"]["env"]["episode_steps"] == 40
    assert manifest["files"] == {
        "curve": "curve.csv", "policy": "policy.npz", "manifest": "manifest.json",
    }


def test_saved_policy_reloads_and_acts(tiny_run):
    agent, encoder, algo, env_settings, _physics = load_policy(str(tiny_run / "policy.npz"))
    assert algo == "dqn"
    assert env_settings.episode_steps == 40
    obs = np.zeros(encoder.input_dim if hasattr(encoder, "input_dim") else encoder.output_dim)
    action = agent.act(encoder.encode(obs), greedy=True)
    assert action in range(5)


def test_train_records_environment_variant(tiny_cfg, tmp_path, capsys):
    out = tmp_path / "runs"
    rc = main(["train", "--config", tiny_cfg, "--algo", "dqn", "--seed", "1",
               "--episodes", "1", "--env", "sim-delayed", "--out", str(out)])
    assert rc == 0
    assert "training dqn on sim-delayed" in capsys.readouterr().out
    (run_dir,) = list(out.iterdir())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["env_variant"] == "sim-delayed"
    assert manifest["episodes_run"] == 1


def test_train_against_served_rig(tiny_cfg, tmp_path, capsys):
    service = RigService([DeviceConfig(device_id=0)], clock_mode="virtual")
    server = RigServer(service, host="127.0.0.1", port=0)
    server.start()
    out = tmp_path / "runs"
    try:
        rc = main(["train", "--config", tiny_cfg, "--algo", "dqn", "--seed", "3",
                   "--episodes", "1", "--env", "wire",
                   "--broker", f"127.0.0.1:{server.port}", "--out", str(out)])
    finally:
        server.stop()
    assert rc == 0
    assert "training dqn on wire" in capsys.readouterr().out
    (run_dir,) = list(out.iterdir())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["env_variant"] == "wire"
    lines = (run_dir / "curve.csv").read_text().strip().splitlines()
    assert len(lines) == 2 and lines[1].split(",")[2] == "40"


# ---------------------------------------------------------------------------
# eval


def test_eval_reference_controller_reports_quality(capsys):
    rc = main(["eval", "--reference", "--episodes", "1"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "evaluating reference controller on sim, 1 episodes" in out

    first_up = re.search(r"first upright (\d+) steps \(([\d.]+) s\)", out)
    assert first_up is not None
    steps, seconds = int(first_up.group(1)), float(first_up.group(2))
    assert steps <= 60
    assert seconds == pytest.approx(steps * 0.06)  # 12 frames of 5 ms per step

    late = re.search(r"mean upright fraction after step 100: ([\d.]+)%", out)
    assert late is not None and float(late.group(1)) >= 99.0
    assert "time to upright: median" in out


def test_eval_saved_policy_roundtrip(tiny_run, capsys):
    rc = main(["eval", "--policy", str(tiny_run / "policy.npz"),
               "--episodes", "1", "--seed", "5"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "(dqn)" in out
    assert "mean return" in out


def test_eval_usage_errors(tiny_run, capsys):
    assert main(["eval", "--reference",
                 "--policy", str(tiny_run / "policy.npz")]) == 2
    assert "not both" in capsys.readouterr().err

    assert main(["eval"]) == 2
    assert "--policy or --reference" in capsys.readouterr().err

    missing = str(tiny_run / "nope.npz")
    assert main(["eval", "--policy", missing]) == 2
    assert missing in capsys.readouterr().err


def test_eval_unreachable_rig_is_runtime_error(capsys):
    rc = main(["eval", "--reference", "--env", "wire", "--broker", "127.0.0.1:1"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# config / argument validation


def test_unknown_config_key_names_the_key(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[env]\nstep_tyme_ms = 60.0\n")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "step_tyme_ms" in capsys.readouterr().err


def test_bad_broker_addresses_are_config_errors(capsys):
    assert main(["bench", "--broker", "nope"]) == 2
    assert "port must be an integer" in capsys.readouterr().err
    assert main(["bench", "--broker", "127.0.0.1:99999"]) == 2
    assert "out of range" in capsys.readouterr().err


def test_rig_rejects_zero_devices(capsys):
    assert main(["rig", "--devices", "0"]) == 2
    assert "--devices" in capsys.readouterr().err


def test_bad_clock_mode_is_config_error(capsys):
    assert main(["bench", "--clock", "sideways"]) == 2
    assert "clock" in capsys.readouterr().err.lower()


# ---------------------------------------------------------------------------
# bench


LOCKED_CADENCE = "[rig]\nobs_interval_ms = 14\nact_interval_ms = 56\n"


def test_bench_measures_cadence_age_and_actuation(tmp_path, capsys):
    cfg = tmp_path / "locked.toml"
    cfg.write_text(LOCKED_CADENCE)
    hist = tmp_path / "ages.csv"
    rc = main(["bench", "--config", str(cfg), "--duration-ms", "1500",
               "--probes", "2", "--out", str(hist)])
    assert rc == 0
    out = capsys.readouterr().out

    assert "stamp cadence: mean 14.0 ms (min 14, max 14)" in out
    assert "delivery lag (arrival - stamp): mean 0.00 ms" in out
    # 56 ms control period against a 14 ms stream locks the sampling
    # phase, so the age at use is one constant.
    assert "observation age at use: mean 4.0 ms, p50 4.0, p95 4.0, max 4.0" in out

    latency = re.search(r"action-to-effect latency: mean ([\d.]+) ms", out)
    assert latency is not None
    assert 0.0 < float(latency.group(1)) <= 150.0
    assert "2 probes, 0 missed" in out

    lines = hist.read_text().strip().splitlines()
    assert lines[0] == "age_bin_lo_ms,age_bin_hi_ms,count"
    rows = [line.split(",") for line in lines[1:]]
    occupied = [row for row in rows if int(row[2]) > 0]
    assert len(occupied) == 1  # every sample sits in one 5 ms bin
    lo, hi, count = occupied[0]
    assert (float(lo), float(hi)) == (0.0, 5.0)
    assert int(count) >= 20


def test_bench_default_profile_sweeps_sampling_phase(capsys):
    # 15 ms stream against the 56 ms control period: co-prime, so the age
    # at use walks the whole [0, 15) range instead of pinning to one value.
    rc = main(["bench", "--duration-ms", "1500", "--probes", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "stamp cadence: mean 15.0 ms (min 15, max 15)" in out
    assert "delivery lag (arrival - stamp): mean 0.00 ms" in out
    age = re.search(r"observation age at use: mean ([\d.]+) ms, .* max ([\d.]+)", out)
    assert age is not None
    assert 5.0 <= float(age.group(1)) <= 9.0  # uniform over [0, 15) in the limit
    assert float(age.group(2)) < 15.0


def test_bench_exposes_injected_observation_latency(tmp_path, capsys):
    cfg = tmp_path / "fault.toml"
    cfg.write_text(LOCKED_CADENCE + "\n[rig.faults.observations]\nbase_latency_ms = 50.0\n")
    rc = main(["bench", "--config", str(cfg), "--duration-ms", "1500",
               "--probes", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "stamp cadence: mean 14.0 ms" in out
    assert "delivery lag (arrival - stamp): mean 50.00 ms" in out
    assert "observation age at use: mean 60.0 ms" in out


# ---------------------------------------------------------------------------
# script


def _run_script(capsys, *args):
    rc = main(["script", *args])
    captured = capsys.readouterr()
    assert rc == 0, captured.err
    return captured.out


def test_script_emits_grounded_deterministic_trace(capsys):
    actions = [0, 3, 3, 1, 0]
    text = _run_script(capsys, "--actions", "0,3,3,1,0")
    doc = json.loads(text)

    assert doc["device_id"] == 0
    assert doc["profile"] == {
        "obs_interval_ms": 15, "act_interval_ms": 60, "step_time_ms": 60.0,
        "reset_hold_ms": 2040.0, "mode": "discrete",
    }
    assert doc["topics"]["observations"] == obs_topic(0)
    assert doc["topics"]["actions"] == act_topic(0)
    assert doc["topics"]["clock"] == "rig/clock"

    config_payloads = {frame["payload"] for frame in doc["handshake"]["config_frames"]}
    assert config_payloads == {"cfg:mode=d", "cfg:stream=1"}
    assert [frame["payload"] for frame in doc["handshake"]["reset_frames"]] == ["m0"]

    assert [step["action"] for step in doc["steps"]] == actions
    for step in doc["steps"]:
        (frame,) = step["frames"]
        assert frame["topic"] == act_topic(0)
        assert frame["payload"] == f"m{step['action']}"
        expected = encode_frame(KIND_PUBLISH, frame["topic"], frame["payload"].encode())
        assert frame["frame_hex"] == expected.hex()
        assert step["age_ms"] == 0.0  # aligned profile: observed on the grid
        parsed = ObservationVector.parse(step["observation"])
        assert parsed.t_ms == step["t_ms"] and parsed.count == step["count"]
    stamps = [step["t_ms"] for step in doc["steps"]]
    assert all(b - a == 60 for a, b in zip(stamps, stamps[1:]))
    assert doc["return"] == pytest.approx(sum(s["reward"] for s in doc["steps"]))
    assert doc["observations_received"] >= 100

    # Grounding: the same actions through the direct simulation must give
    # byte-identical rewards and encoder counts.
    env = PendulumSimEnv(EnvSettings(step_time_ms=60.0))
    env.reset()
    for step, action in zip(doc["steps"], actions):
        _vec, reward, _term, _trunc, info = env.step(action)
        assert step["reward"] == reward
        assert step["count"] == info["count"]

    assert _run_script(capsys, "--actions", "0,3,3,1,0") == text


def test_script_reads_actions_from_file(tmp_path, capsys):
    path = tmp_path / "actions.json"
    path.write_text("[0, 3, 4]")
    from_file = json.loads(_run_script(capsys, "--actions-file", str(path), "--compact"))
    inline = json.loads(_run_script(capsys, "--actions", "0,3,4"))
    assert from_file == inline
    assert [s["action"] for s in from_file["steps"]] == [0, 3, 4]


def test_script_rejects_bad_action_input(tmp_path, capsys):
    assert main(["script", "--actions", "0,9"]) == 2
    assert "out of range" in capsys.readouterr().err

    assert main(["script", "--actions", " , "]) == 2
    assert "empty" in capsys.readouterr().err

    assert main(["script"]) == 2
    assert "--actions" in capsys.readouterr().err

    bad = tmp_path / "bad.json"
    bad.write_text("{\"a\": 1}")
    assert main(["script", "--actions-file", str(bad)]) == 2
    assert "JSON array" in capsys.readouterr().err

    too_many = ",".join("0" for _ in range(501))
    assert main(["script", "--actions", too_many]) == 2
    assert "501" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# rig (served as a child process, stopped with SIGINT)


def _spawn_rig(*extra):
    proc = subprocess.Popen(
        [sys.executable, "-m", "pendulum_rig.cli", "rig", *extra],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
        env={**os.environ, "PYTHONUNBUFFERED": "1"},
    )
    lines: "queue.Queue[str]" = queue.Queue()

    def pump():
        assert proc.stdout is not None
        for line in proc.stdout:
            lines.put(line)
        lines.put("")  # EOF marker

    threading.Thread(target=pump, daemon=True).start()
    return proc, lines


def _read_until(lines, needle, timeout=20.0):
    seen = []
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            line = lines.get(timeout=max(0.05, deadline - time.monotonic()))
        except queue.Empty:
            break
        if line == "":
            break
        seen.append(line)
        if needle in line:
            return seen
    raise AssertionError(f"{needle!r} not seen in rig output: {''.join(seen)!r}")


def test_rig_serves_devices_until_interrupted():
    proc, lines = _spawn_rig("--devices", "2", "--port", "0")
    try:
        header = "".join(_read_until(lines, "press Ctrl-C"))
        match = re.search(r"rig listening on 127\.0\.0\.1:(\d+) \(clock virtual\)", header)
        assert match is not None, header
        port = int(match.group(1))
        for device_id in (0, 1):
            assert obs_topic(device_id) in header
            assert act_topic(device_id) in header

        session = TcpSession("127.0.0.1", port, clock_mode="virtual")
        observed = []
        try:
            session.subscribe(obs_topic(1), lambda _t, payload: observed.append(
                ObservationVector.parse(payload.decode())))
            session.publish(act_topic(1), b"cfg:stream=1")
            session.sleep_ms(100.0)
        finally:
            session.close()
        assert len(observed) >= 5
        assert all(vec.t_ms % 15 == 0 for vec in observed)  # served stream cadence

        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=15) == 0
        _read_until(lines, "rig stopped")
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait(timeout=5)
