import { describe, expect, it } from "vitest";

import { PendulumWireBridge } from "../src/bridge.js";
import { actTopic } from "../src/client.js";
import { KIND_PUBLISH, decodeAll } from "../src/frames.js";
import { referenceTrace, spawnRig, stopRig } from "./rig.js";

/** Deterministic action script covering all five commands, starting on 3. */
function actionScript(n: number): number[] {
  return Array.from({ length: n }, (_, i) => (i * 7 + 3) % 5);
}

interface SentPublish {
  topic: string;
  payload: string;
  hex: string;
}

function capturePublishes(bridge: PendulumWireBridge, into: SentPublish[]): void {
  bridge.onFrameSent = (bytes) => {
    for (const frame of decodeAll(bytes)) {
      if (frame.kind === KIND_PUBLISH) {
        into.push({
          topic: frame.topic,
          payload: frame.payload.toString("utf-8"),
          hex: bytes.toString("hex"),
        });
      }
    }
  };
}

describe("wire bridge vs reference client", () => {
  it("matches rewards and wire bytes over a 100-action episode", async () => {
    const actions = actionScript(100);
    expect(actions).toContain(3);
    const trace = await referenceTrace(actions);
    expect(trace.steps).toHaveLength(100);

    const rig = await spawnRig();
    const bridge = new PendulumWireBridge({ port: rig.port });
    const sent: SentPublish[] = [];
    capturePublishes(bridge, sent);
    try {
      await bridge.reset();
      const rewards: number[] = [];
      const infos = [];
      for (const action of actions) {
        const [, reward, done, info] = await bridge.step(action);
        rewards.push(reward);
        infos.push(info);
        expect(done).toBe(false);
      }

      // Rewards computed client-side from the same observation stream must
      // agree with the reference implementation.
      for (let i = 0; i < actions.length; i += 1) {
        expect(Math.abs(rewards[i] - trace.steps[i].reward)).toBeLessThanOrEqual(1e-6);
      }
      // Both clients run the same deterministic rig, so the agreement is in
      // fact exact, as are the stamped times and encoder counts.
      expect(rewards).toEqual(trace.steps.map((s) => s.reward));
      expect(infos.map((x) => x.t_ms)).toEqual(trace.steps.map((s) => s.t_ms));
      expect(infos.map((x) => x.count)).toEqual(trace.steps.map((s) => s.count));

      // Byte-identical action frames: handshake config, reset stop command,
      // then one publish per scripted action.
      const actionChannel = actTopic(0);
      const toDevice = sent.filter((p) => p.topic === actionChannel);
      expect(toDevice.map((p) => p.payload)).toEqual([
        ...trace.handshake.config_frames.map((f) => f.payload),
        ...trace.handshake.reset_frames.map((f) => f.payload),
        ...actions.map((a) => `m${a}`),
      ]);
      expect(toDevice.slice(0, 2).map((p) => p.hex)).toEqual(
        trace.handshake.config_frames.map((f) => f.frame_hex),
      );
      expect(toDevice.slice(2, 3).map((p) => p.hex)).toEqual(
        trace.handshake.reset_frames.map((f) => f.frame_hex),
      );
      const actionFrames = toDevice.slice(3);
      for (let i = 0; i < actions.length; i += 1) {
        expect(trace.steps[i].frames).toHaveLength(1);
        expect(actionFrames[i].hex).toBe(trace.steps[i].frames[0].frame_hex);
      }
      // The scripted sequence opens with action 3, so the very first action
      // frame on the wire carries the "m3" payload.
      expect(actionFrames[0].payload).toBe("m3");
      expect(actionFrames[0].hex).toBe(
        "0000001703001270656e64756c756d2f302f616374696f6e736d33",
      );
    } finally {
      bridge.close();
      await stopRig(rig);
    }
  });

  it("truncates episodes at the configured step limit", async () => {
    const rig = await spawnRig();
    const bridge = new PendulumWireBridge({ port: rig.port });
    try {
      await bridge.reset();
      let doneAt = -1;
      for (let i = 1; i <= 500; i += 1) {
        const [, , done, info] = await bridge.step(0);
        expect(info.step).toBe(i);
        if (done) {
          doneAt = i;
          break;
        }
      }
      expect(doneAt).toBe(500);
      // A finished episode requires a reset before stepping again.
      await expect(bridge.step(0)).rejects.toThrow(/reset/);
      const [, info] = await bridge.reset();
      expect(info.step).toBe(0);
      expect(info.episode).toBe(1);
      const [, , done2] = await bridge.step(1);
      expect(done2).toBe(false);
    } finally {
      bridge.close();
      await stopRig(rig);
    }
  }, 180_000);

  it("reconnects with a fresh session after close", async () => {
    const rig = await spawnRig();
    const bridge = new PendulumWireBridge({ port: rig.port });
    try {
      const [, first] = await bridge.reset();
      await bridge.step(2);
      bridge.close();
      expect(bridge.resetRequired).toBe(true);
      const [, second] = await bridge.reset();
      expect(bridge.resetRequired).toBe(false);
      expect(second.episode).toBeGreaterThan(first.episode);
      const [, , done] = await bridge.step(2);
      expect(done).toBe(false);
    } finally {
      bridge.close();
      await stopRig(rig);
    }
  });
});
