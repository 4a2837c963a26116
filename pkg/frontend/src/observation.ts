/**
 * Observation parsing, reward and feature math for the rig's telemetry lines.
 *
 * Every formula here mirrors the host-side environment it is a client for,
 * operation by operation, so two implementations fed the same observation
 * line produce bit-identical rewards and feature vectors.
 */

export const ENCODER_COUNTS = 1024;
export const N_DISCRETE_ACTIONS = 5;
export const ACTION_LOW = -1.0;
export const ACTION_HIGH = 1.0;

export const ANGULAR_WEIGHT = 1.0;
export const VELOCITY_WEIGHT = 0.5;
export const VEL_SCALE = 0.25;
export const AGE_SCALE = 5.0;
export const SINCE_ACTION_CAP_MS = 1000.0;

export class ObservationParseError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ObservationParseError";
  }
}

/** One parsed firmware observation line. */
export interface ObservationVector {
  tMs: number;
  count: number;
  servo: number;
  pendVel: number;
  pendAcc: number;
  armVel: number;
}

const INT_RE = /^[+-]?\d+$/;

function parseIntStrict(text: string, line: string): number {
  const trimmed = text.trim();
  if (!INT_RE.test(trimmed)) {
    throw new ObservationParseError(`bad observation line ${JSON.stringify(line)}: ${text}`);
  }
  return Number(trimmed);
}

function parseFloatStrict(text: string, line: string): number {
  const value = Number(text.trim());
  if (Number.isNaN(value) || text.trim() === "") {
    throw new ObservationParseError(`bad observation line ${JSON.stringify(line)}: ${text}`);
  }
  return value;
}

export function parseObservation(line: string): ObservationVector {
  const parts = line.split(",");
  if (parts.length !== 6) {
    throw new ObservationParseError(
      `observation needs 6 fields, got ${parts.length}: ${JSON.stringify(line)}`,
    );
  }
  return {
    tMs: parseIntStrict(parts[0], line),
    count: parseIntStrict(parts[1], line),
    servo: parseFloatStrict(parts[2], line),
    pendVel: parseFloatStrict(parts[3], line),
    pendAcc: parseFloatStrict(parts[4], line),
    armVel: parseFloatStrict(parts[5], line),
  };
}

/** Wrap an angle to the principal interval [-pi, pi). */
export function wrapPi(angle: number): number {
  let wrapped = (angle + Math.PI) % (2.0 * Math.PI);
  if (wrapped < 0) {
    wrapped += 2.0 * Math.PI;
  }
  return wrapped - Math.PI;
}

/** Encoder count back to radians, zero at the bottom. */
export function angleFromCount(count: number): number {
  return (((count % ENCODER_COUNTS) + ENCODER_COUNTS) % ENCODER_COUNTS) / ENCODER_COUNTS * 2.0 * Math.PI;
}

/** Signed angle from the upright position in [-pi, pi). */
export function thetaUpFromCount(count: number): number {
  return wrapPi(angleFromCount(count) - Math.PI);
}

export function rewardFrom(obs: ObservationVector): number {
  const thetaUp = thetaUpFromCount(obs.count);
  return -(ANGULAR_WEIGHT * thetaUp * thetaUp + VELOCITY_WEIGHT * obs.pendVel * obs.pendVel);
}

export interface FeatureFlags {
  featureMode: "encoded" | "raw";
  includeVelocity: boolean;
  includeAcceleration: boolean;
  includeArmVelocity: boolean;
  includeTimeSinceAction: boolean;
  includeAge: boolean;
}

export function featureNames(flags: FeatureFlags): string[] {
  const encoded = flags.featureMode === "encoded";
  const names = encoded ? ["sin_angle", "cos_angle"] : ["angle_rev"];
  names.push("servo");
  if (flags.includeVelocity) names.push("pend_vel");
  if (flags.includeAcceleration) names.push("pend_acc");
  if (flags.includeArmVelocity) names.push("arm_vel");
  if (flags.includeTimeSinceAction) names.push("since_action");
  if (flags.includeAge) names.push("age");
  return names;
}

/** Observation line plus timing telemetry into the agent's vector. */
export function buildFeatures(
  flags: FeatureFlags,
  obs: ObservationVector,
  ageMs: number,
  sinceActionMs: number,
): number[] {
  const encoded = flags.featureMode === "encoded";
  const angle = angleFromCount(obs.count);
  const values = encoded
    ? [Math.sin(angle), Math.cos(angle), obs.servo]
    : [obs.count / ENCODER_COUNTS, obs.servo];
  const scale = encoded ? VEL_SCALE : 1.0;
  if (flags.includeVelocity) values.push(obs.pendVel * scale);
  if (flags.includeAcceleration) values.push(obs.pendAcc * scale);
  if (flags.includeArmVelocity) values.push(obs.armVel * scale);
  const tscale = encoded ? AGE_SCALE : 1.0;
  if (flags.includeTimeSinceAction) {
    const since = Math.min(Math.max(sinceActionMs, 0.0), SINCE_ACTION_CAP_MS);
    values.push((since / 1000.0) * tscale);
  }
  if (flags.includeAge) {
    values.push((Math.max(ageMs, 0.0) / 1000.0) * tscale);
  }
  return values;
}

/** Exponential smoothing of continuous commands: a <- c*a + (1-c)*u. */
export class ActionFilter {
  readonly c: number;
  value = 0.0;

  constructor(c: number) {
    if (!(c >= 0.0 && c < 1.0)) {
      throw new Error("filter coefficient must be in [0, 1)");
    }
    this.c = c;
  }

  reset(value = 0.0): void {
    this.value = value;
  }

  apply(u: number): number {
    this.value = this.c * this.value + (1.0 - this.c) * u;
    return this.value;
  }
}
