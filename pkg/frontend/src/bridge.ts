/**
 * Gym-style environment facade over a live rig connection.
 *
 * `reset` holds the stop command for the settle time and returns the first
 * feature vector; `step` publishes one action, waits one control period on
 * the rig clock, and scores the freshest observation client-side.  Episodes
 * end by truncation after a fixed number of steps.  A broken connection
 * surfaces as `ConnectionLostError` and leaves the bridge in a
 * reset-required state; the next `reset` reconnects from scratch.
 */

import {
  ConnectionLostError,
  RigClient,
  actTopic,
  obsTopic,
} from "./client.js";
import {
  ACTION_HIGH,
  ACTION_LOW,
  ActionFilter,
  FeatureFlags,
  N_DISCRETE_ACTIONS,
  ObservationVector,
  buildFeatures,
  featureNames,
  parseObservation,
  rewardFrom,
  thetaUpFromCount,
} from "./observation.js";

export class BridgeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BridgeError";
  }
}

/** The episode cannot continue; call `reset` to reconnect and start over. */
export class ResetRequiredError extends BridgeError {
  constructor(message: string) {
    super(message);
    this.name = "ResetRequiredError";
  }
}

export class StaleObservationError extends BridgeError {
  constructor(message: string) {
    super(message);
    this.name = "StaleObservationError";
  }
}

export interface BridgeConfig extends FeatureFlags {
  host: string;
  port: number;
  deviceId: number;
  mode: "discrete" | "continuous";
  /** Control period: how far the rig clock advances per step. */
  stepTimeMs: number;
  /** How long the stop command is held during reset. */
  resetHoldMs: number;
  episodeSteps: number;
  /** Oldest observation age accepted when one is consumed. */
  staleLimitMs: number;
  actionFilter: number;
  /** Wall-clock guard on connect and clock acknowledgements. */
  timeoutMs: number;
}

export const DEFAULT_CONFIG: BridgeConfig = {
  host: "127.0.0.1",
  port: 1899,
  deviceId: 0,
  mode: "discrete",
  stepTimeMs: 60.0,
  resetHoldMs: 2040.0,
  episodeSteps: 500,
  staleLimitMs: 500.0,
  actionFilter: 0.85,
  featureMode: "encoded",
  includeVelocity: true,
  includeAcceleration: true,
  includeArmVelocity: true,
  includeTimeSinceAction: true,
  includeAge: true,
  timeoutMs: 30_000,
};

export interface BridgeInfo {
  t_ms: number;
  count: number;
  servo: number;
  pend_vel: number;
  pend_acc: number;
  arm_vel: number;
  theta_up: number;
  age_ms: number;
  since_action_ms: number;
  step: number;
  episode: number;
}

export type ResetResult = [number[], BridgeInfo];
export type StepResult = [number[], number, boolean, BridgeInfo];

export class PendulumWireBridge {
  readonly config: BridgeConfig;
  private client: RigClient | null = null;
  private latest: ObservationVector | null = null;
  private received = 0;
  parseErrors = 0;
  private sinceAnchorMs = 0.0;
  private stepIndex = 0;
  private episodeIndex = -1;
  private needsReset = true;
  private readonly filter: ActionFilter | null;
  /** Wire tap: called with the exact bytes of every frame sent. */
  onFrameSent?: (bytes: Buffer) => void;

  constructor(overrides: Partial<BridgeConfig> = {}) {
    this.config = { ...DEFAULT_CONFIG, ...overrides };
    if (this.config.mode !== "discrete" && this.config.mode !== "continuous") {
      throw new BridgeError(`mode must be discrete or continuous, got ${this.config.mode}`);
    }
    if (this.config.episodeSteps < 1 || this.config.stepTimeMs <= 0) {
      throw new BridgeError("episodeSteps and stepTimeMs must be positive");
    }
    this.filter = this.config.mode === "continuous" ? new ActionFilter(this.config.actionFilter) : null;
  }

  get observationSize(): number {
    return featureNames(this.config).length;
  }

  get nActions(): number {
    return this.config.mode === "discrete" ? N_DISCRETE_ACTIONS : 0;
  }

  get observationsReceived(): number {
    return this.received;
  }

  get connected(): boolean {
    return this.client !== null && !this.client.lost;
  }

  get resetRequired(): boolean {
    return this.needsReset || !this.connected;
  }

  /** Hold the stop command for the settle time, then observe. */
  async reset(): Promise<ResetResult> {
    await this.ensureSession();
    try {
      const stop = this.config.mode === "discrete" ? "m0" : "b0.000000";
      this.publishAction(stop);
      await this.session().sleepMs(this.config.resetHoldMs);
      this.stepIndex = 0;
      this.episodeIndex += 1;
      this.filter?.reset(0.0);
      const { obs, ageMs, sinceMs } = this.use();
      this.needsReset = false;
      const vector = buildFeatures(this.config, obs, ageMs, sinceMs);
      return [vector, this.info(obs, ageMs, sinceMs)];
    } catch (err) {
      this.handleLoss(err);
      throw err;
    }
  }

  /** Publish one action, wait one control period, score the freshest observation. */
  async step(action: number): Promise<StepResult> {
    if (this.resetRequired) {
      throw new ResetRequiredError(
        this.connected ? "call reset() before step()" : "connection lost; call reset() to reconnect",
      );
    }
    const payload = this.formatAction(action);
    try {
      this.publishAction(payload);
      await this.session().sleepMs(this.config.stepTimeMs);
      const { obs, ageMs, sinceMs } = this.use();
      const vector = buildFeatures(this.config, obs, ageMs, sinceMs);
      const reward = rewardFrom(obs);
      this.stepIndex += 1;
      const done = this.stepIndex >= this.config.episodeSteps;
      if (done) {
        this.needsReset = true;
      }
      return [vector, reward, done, this.info(obs, ageMs, sinceMs)];
    } catch (err) {
      this.handleLoss(err);
      throw err;
    }
  }

  close(): void {
    this.client?.close();
    this.client = null;
    this.needsReset = true;
  }

  // -- internals --------------------------------------------------------

  private session(): RigClient {
    if (this.client === null) {
      throw new ResetRequiredError("not connected; call reset() first");
    }
    return this.client;
  }

  private async ensureSession(): Promise<void> {
    if (this.connected) {
      return;
    }
    this.client?.close();
    this.client = null;
    this.latest = null;
    const client = await RigClient.connect({
      host: this.config.host,
      port: this.config.port,
      clock: "virtual",
      timeoutMs: this.config.timeoutMs,
      onFrameSent: (bytes) => this.onFrameSent?.(bytes),
    });
    this.client = client;
    this.sinceAnchorMs = client.nowMs();
    client.subscribe(obsTopic(this.config.deviceId), (_topic, payload) =>
      this.onObservation(payload),
    );
    const modeFlag = this.config.mode === "discrete" ? "d" : "c";
    client.publish(actTopic(this.config.deviceId), `cfg:mode=${modeFlag}`);
    client.publish(actTopic(this.config.deviceId), "cfg:stream=1");
  }

  private onObservation(payload: Buffer): void {
    const line = payload.toString("utf-8");
    let obs: ObservationVector;
    try {
      obs = parseObservation(line);
    } catch {
      // Malformed lines are skipped; the last good observation stays cached
      // so one corrupt message never breaks a step.
      this.parseErrors += 1;
      return;
    }
    this.latest = obs;
    this.received += 1;
  }

  private formatAction(action: number): string {
    if (this.config.mode === "discrete") {
      if (!Number.isInteger(action) || action < 0 || action >= N_DISCRETE_ACTIONS) {
        throw new BridgeError(`discrete action must be an integer in [0, ${N_DISCRETE_ACTIONS - 1}]`);
      }
      return `m${action}`;
    }
    const clipped = Math.min(Math.max(action, ACTION_LOW), ACTION_HIGH);
    const value = this.filter!.apply(clipped);
    return `b${value.toFixed(6)}`;
  }

  private publishAction(payload: string): void {
    const client = this.session();
    client.publish(actTopic(this.config.deviceId), payload);
    this.sinceAnchorMs = client.nowMs();
  }

  private use(): { obs: ObservationVector; ageMs: number; sinceMs: number } {
    const now = this.session().nowMs();
    const obs = this.latest;
    if (obs === null) {
      throw new StaleObservationError("no observation received yet: is the rig running and streaming?");
    }
    const ageMs = now - obs.tMs;
    if (ageMs > this.config.staleLimitMs) {
      throw new StaleObservationError(
        `freshest observation is ${ageMs.toFixed(0)} ms old (limit ${this.config.staleLimitMs.toFixed(0)} ms)`,
      );
    }
    return { obs, ageMs, sinceMs: now - this.sinceAnchorMs };
  }

  private info(obs: ObservationVector, ageMs: number, sinceMs: number): BridgeInfo {
    return {
      t_ms: obs.tMs,
      count: obs.count,
      servo: obs.servo,
      pend_vel: obs.pendVel,
      pend_acc: obs.pendAcc,
      arm_vel: obs.armVel,
      theta_up: thetaUpFromCount(obs.count),
      age_ms: ageMs,
      since_action_ms: sinceMs,
      step: this.stepIndex,
      episode: this.episodeIndex,
    };
  }

  private handleLoss(err: unknown): void {
    if (err instanceof ConnectionLostError) {
      this.needsReset = true;
      this.client?.close();
      this.client = null;
    }
  }
}
