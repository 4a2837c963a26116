export {
  FramingError,
  FrameDecoder,
  encodeFrame,
  decodeAll,
  KIND_CONNECT,
  KIND_SUBSCRIBE,
  KIND_PUBLISH,
} from "./frames.js";
export type { Frame } from "./frames.js";

export {
  RigClient,
  ConnectionLostError,
  CLOCK_TOPIC,
  CLOCK_ACK_TOPIC,
  obsTopic,
  actTopic,
} from "./client.js";
export type { RigClientOptions, MessageHandler } from "./client.js";

export {
  parseObservation,
  rewardFrom,
  buildFeatures,
  featureNames,
  wrapPi,
  angleFromCount,
  thetaUpFromCount,
  ActionFilter,
  ObservationParseError,
  ENCODER_COUNTS,
  N_DISCRETE_ACTIONS,
} from "./observation.js";
export type { ObservationVector, FeatureFlags } from "./observation.js";

export {
  PendulumWireBridge,
  BridgeError,
  ResetRequiredError,
  StaleObservationError,
  DEFAULT_CONFIG,
} from "./bridge.js";
export type { BridgeConfig, BridgeInfo, ResetResult, StepResult } from "./bridge.js";

export { register, make, registeredIds } from "./registry.js";
export type { BridgeFactory } from "./registry.js";
