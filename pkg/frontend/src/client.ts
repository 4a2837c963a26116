/**
 * TCP pub/sub client session for the rig wire protocol.
 *
 * On connect the client sends a CONNECT frame, then exchanges SUBSCRIBE and
 * PUBLISH frames.  When the rig runs a virtual clock, time advances only on
 * request: `sleepMs` publishes an advance request on the clock topic and
 * resolves once the acknowledgement arrives.  Because the server writes each
 * connection's frames in FIFO order, every observation published during the
 * advance is dispatched to its subscriber before the acknowledgement, so a
 * caller that awaits `sleepMs` always sees the freshest observation.
 */

import * as net from "node:net";

import {
  FrameDecoder,
  FramingError,
  KIND_CONNECT,
  KIND_PUBLISH,
  KIND_SUBSCRIBE,
  encodeFrame,
} from "./frames.js";

export const CLOCK_TOPIC = "rig/clock";
export const CLOCK_ACK_TOPIC = "rig/clock/ack";

export function obsTopic(deviceId: number): string {
  return `pendulum/${deviceId}/observations`;
}

export function actTopic(deviceId: number): string {
  return `pendulum/${deviceId}/actions`;
}

export type MessageHandler = (topic: string, payload: Buffer) => void;

/** The socket to the rig dropped, or an operation raced its shutdown. */
export class ConnectionLostError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConnectionLostError";
  }
}

export interface RigClientOptions {
  host: string;
  port: number;
  /** "virtual": rig time advances only via sleepMs requests (default). */
  clock?: "virtual" | "real";
  /** Wall-clock guard on connect and on each clock acknowledgement. */
  timeoutMs?: number;
  /** Wire tap: called with the exact bytes of every frame written. */
  onFrameSent?: (bytes: Buffer) => void;
}

interface Waiter {
  resolve: (now: number) => void;
  reject: (err: Error) => void;
  timer: NodeJS.Timeout;
}

export class RigClient {
  private socket: net.Socket;
  private decoder = new FrameDecoder();
  private handlers = new Map<string, MessageHandler[]>();
  private simNowMs = 0.0;
  private ackWaiter: Waiter | null = null;
  private lostError: ConnectionLostError | null = null;
  private readonly clock: "virtual" | "real";
  private readonly timeoutMs: number;
  private readonly onFrameSent?: (bytes: Buffer) => void;

  private constructor(socket: net.Socket, opts: RigClientOptions) {
    this.socket = socket;
    this.clock = opts.clock ?? "virtual";
    this.timeoutMs = opts.timeoutMs ?? 30_000;
    this.onFrameSent = opts.onFrameSent;
  }

  /** Dial the rig, send CONNECT, and (virtual clock) learn the current time. */
  static async connect(opts: RigClientOptions): Promise<RigClient> {
    const socket = new net.Socket();
    socket.setNoDelay(true);
    const client = new RigClient(socket, opts);
    await new Promise<void>((resolve, reject) => {
      const timer = setTimeout(() => {
        socket.destroy();
        reject(new ConnectionLostError(`connect to ${opts.host}:${opts.port} timed out`));
      }, client.timeoutMs);
      socket.once("error", (err) => {
        clearTimeout(timer);
        reject(new ConnectionLostError(`connect to ${opts.host}:${opts.port} failed: ${err.message}`));
      });
      socket.connect(opts.port, opts.host, () => {
        clearTimeout(timer);
        resolve();
      });
    });
    socket.on("data", (chunk) => client.onData(chunk));
    socket.on("error", (err) => client.markLost(`socket error: ${err.message}`));
    socket.on("close", () => client.markLost("connection closed"));
    client.writeFrame(encodeFrame(KIND_CONNECT, ""));
    if (client.clock === "virtual") {
      client.subscribe(CLOCK_ACK_TOPIC, (_topic, payload) => client.onClockAck(payload));
      // Ask for the current virtual time so nowMs() is meaningful before the
      // first sleep; the reply uses the same acknowledgement topic.
      await client.clockRequest("get");
    }
    return client;
  }

  get lost(): boolean {
    return this.lostError !== null;
  }

  nowMs(): number {
    if (this.clock === "virtual") {
      return this.simNowMs;
    }
    return performance.now();
  }

  subscribe(topic: string, handler: MessageHandler): void {
    const list = this.handlers.get(topic);
    if (list) {
      list.push(handler);
    } else {
      this.handlers.set(topic, [handler]);
    }
    this.writeFrame(encodeFrame(KIND_SUBSCRIBE, topic));
  }

  publish(topic: string, payload: Buffer | string): void {
    this.writeFrame(encodeFrame(KIND_PUBLISH, topic, payload));
  }

  /** Advance the rig clock (virtual) or wait in wall time (real). */
  async sleepMs(ms: number): Promise<void> {
    if (this.clock === "real") {
      await new Promise<void>((resolve) => setTimeout(resolve, ms));
      return;
    }
    await this.clockRequest(`advance:${ms.toFixed(3)}`);
  }

  close(): void {
    if (this.lostError === null) {
      this.lostError = new ConnectionLostError("session closed");
      this.failWaiter(this.lostError);
    }
    this.socket.destroy();
  }

  // -- internals --------------------------------------------------------

  private clockRequest(payload: string): Promise<number> {
    if (this.ackWaiter !== null) {
      return Promise.reject(new Error("a clock request is already outstanding"));
    }
    if (this.lostError !== null) {
      return Promise.reject(this.lostError);
    }
    return new Promise<number>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.ackWaiter = null;
        reject(new ConnectionLostError(`no clock acknowledgement within ${this.timeoutMs} ms`));
      }, this.timeoutMs);
      this.ackWaiter = { resolve, reject, timer };
      try {
        this.publish(CLOCK_TOPIC, payload);
      } catch (err) {
        clearTimeout(timer);
        this.ackWaiter = null;
        reject(err as Error);
      }
    });
  }

  private onClockAck(payload: Buffer): void {
    const text = payload.toString("utf-8");
    if (!text.startsWith("advanced:")) {
      return;
    }
    const now = Number(text.slice("advanced:".length));
    if (!Number.isFinite(now)) {
      return;
    }
    this.simNowMs = now;
    const waiter = this.ackWaiter;
    if (waiter !== null) {
      this.ackWaiter = null;
      clearTimeout(waiter.timer);
      waiter.resolve(now);
    }
  }

  private onData(chunk: Buffer): void {
    let frames;
    try {
      frames = this.decoder.feed(chunk);
    } catch (err) {
      if (err instanceof FramingError) {
        this.markLost(`protocol violation from server: ${err.message}`);
        this.socket.destroy();
        return;
      }
      throw err;
    }
    for (const frame of frames) {
      if (frame.kind !== KIND_PUBLISH) {
        continue;
      }
      for (const handler of this.handlers.get(frame.topic) ?? []) {
        handler(frame.topic, frame.payload);
      }
    }
  }

  private writeFrame(bytes: Buffer): void {
    if (this.lostError !== null) {
      throw this.lostError;
    }
    this.socket.write(bytes);
    this.onFrameSent?.(bytes);
  }

  private markLost(reason: string): void {
    if (this.lostError !== null) {
      return;
    }
    this.lostError = new ConnectionLostError(reason);
    this.failWaiter(this.lostError);
  }

  private failWaiter(err: ConnectionLostError): void {
    const waiter = this.ackWaiter;
    if (waiter !== null) {
      this.ackWaiter = null;
      clearTimeout(waiter.timer);
      waiter.reject(err);
    }
  }
}
