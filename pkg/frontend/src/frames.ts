/**
 * Length-prefixed pub/sub frames.
 *
 * Wire layout, all integers big-endian:
 *
 *     4 bytes  payload length = 1 + 2 + len(topic) + len(payload)
 *     1 byte   kind: 0x01 CONNECT, 0x02 SUBSCRIBE, 0x03 PUBLISH
 *     2 bytes  topic length
 *     N bytes  topic, UTF-8
 *     M bytes  payload, UTF-8 (empty for CONNECT/SUBSCRIBE)
 *
 * The decoder is incremental: feed it arbitrary byte chunks and it yields
 * complete frames, buffering partial input rather than erroring.  Anything
 * structurally wrong (unknown kind, lengths that do not add up) raises
 * FramingError and the connection should be reset.
 */

export const KIND_CONNECT = 0x01;
export const KIND_SUBSCRIBE = 0x02;
export const KIND_PUBLISH = 0x03;

const KNOWN_KINDS = new Set([KIND_CONNECT, KIND_SUBSCRIBE, KIND_PUBLISH]);

export const MAX_TOPIC = 0xffff;
export const MAX_BODY = 0xffffffff;

export class FramingError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FramingError";
  }
}

export interface Frame {
  kind: number;
  topic: string;
  payload: Buffer;
}

export function encodeFrame(
  kind: number,
  topic: string,
  payload: Buffer | string = Buffer.alloc(0),
): Buffer {
  if (!KNOWN_KINDS.has(kind)) {
    throw new FramingError(`unknown frame kind 0x${kind.toString(16)}`);
  }
  const topicB = Buffer.from(topic, "utf-8");
  if (kind !== KIND_CONNECT && topicB.length === 0) {
    throw new FramingError("topic required for SUBSCRIBE/PUBLISH");
  }
  if (topicB.length > MAX_TOPIC) {
    throw new FramingError("topic too long");
  }
  const payloadB = typeof payload === "string" ? Buffer.from(payload, "utf-8") : payload;
  const bodyLen = 1 + 2 + topicB.length + payloadB.length;
  if (bodyLen > MAX_BODY) {
    throw new FramingError("payload too long");
  }
  const header = Buffer.alloc(7);
  header.writeUInt32BE(bodyLen, 0);
  header.writeUInt8(kind, 4);
  header.writeUInt16BE(topicB.length, 5);
  return Buffer.concat([header, topicB, payloadB]);
}

export class FrameDecoder {
  private buf: Buffer = Buffer.alloc(0);

  /** Bytes buffered awaiting completion of the next frame. */
  pending(): number {
    return this.buf.length;
  }

  feed(data: Buffer): Frame[] {
    this.buf = this.buf.length === 0 ? Buffer.from(data) : Buffer.concat([this.buf, data]);
    const frames: Frame[] = [];
    for (;;) {
      const frame = this.tryDecode();
      if (frame === null) {
        return frames;
      }
      frames.push(frame);
    }
  }

  private tryDecode(): Frame | null {
    if (this.buf.length < 4) {
      return null;
    }
    const bodyLen = this.buf.readUInt32BE(0);
    if (bodyLen < 3) {
      throw new FramingError(`declared length ${bodyLen} below minimum frame`);
    }
    if (this.buf.length < 4 + bodyLen) {
      return null;
    }
    const kind = this.buf.readUInt8(4);
    if (!KNOWN_KINDS.has(kind)) {
      throw new FramingError(`unknown frame kind 0x${kind.toString(16)}`);
    }
    const topicLen = this.buf.readUInt16BE(5);
    if (3 + topicLen > bodyLen) {
      throw new FramingError("topic length exceeds declared frame length");
    }
    const start = 7;
    const topic = this.buf.subarray(start, start + topicLen).toString("utf-8");
    const payload = Buffer.from(this.buf.subarray(start + topicLen, 4 + bodyLen));
    if (kind !== KIND_CONNECT && topic.length === 0) {
      throw new FramingError("empty topic in SUBSCRIBE/PUBLISH");
    }
    this.buf = this.buf.subarray(4 + bodyLen);
    return { kind, topic, payload };
  }
}

/** Decode a complete byte string; throws if trailing bytes remain. */
export function decodeAll(data: Buffer): Frame[] {
  const dec = new FrameDecoder();
  const frames = dec.feed(data);
  if (dec.pending() > 0) {
    throw new FramingError(`${dec.pending()} trailing bytes after last frame`);
  }
  return frames;
}
