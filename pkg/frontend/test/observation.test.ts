import { describe, expect, it } from "vitest";

import {
  ActionFilter,
  ObservationParseError,
  buildFeatures,
  featureNames,
  parseObservation,
  rewardFrom,
  thetaUpFromCount,
  wrapPi,
} from "../src/observation.js";
import { DEFAULT_CONFIG } from "../src/bridge.js";

// Golden values captured from the reference host-side environment: same
// observation line, same age/since telemetry, bit-identical output expected.
const GOLDEN = [
  {
    line: "2040,0,0.0000,0.0000,0.0000,0.0000",
    reward: -9.869604401089358,
    thetaUp: -3.141592653589793,
    features: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.025],
  },
  {
    line: "2100,512,0.2500,-1.2500,3.5000,0.7500",
    reward: -0.78125,
    thetaUp: 0.0,
    features: [1.2246467991473532e-16, -1.0, 0.25, -0.3125, 0.875, 0.1875, 0.3, 0.025],
  },
  {
    line: "60,1023,-1.0000,2.0000,-12.0000,0.1250",
    reward: -11.831088908450525,
    thetaUp: 3.135456730438251,
    features: [-0.006135884649154477, 0.9999811752826011, -1.0, 0.5, -3.0, 0.03125, 0.3, 0.025],
  },
  {
    line: "15,256,0.5000,0.1000,0.2000,0.3000",
    reward: -2.4724011002723394,
    thetaUp: -1.5707963267948966,
    features: [1.0, 6.123233995736766e-17, 0.5, 0.025, 0.05, 0.075, 0.3, 0.025],
  },
  {
    line: "990,767,-0.3300,-0.4400,5.5000,-0.6600",
    reward: -2.544962178729384,
    thetaUp: 1.5646604036433542,
    features: [-0.9999811752826011, -0.006135884649154416, -0.33, -0.11, 1.375, -0.165, 0.3, 0.025],
  },
];

describe("observation math", () => {
  it("reproduces reference rewards bit-for-bit", () => {
    for (const g of GOLDEN) {
      const obs = parseObservation(g.line);
      expect(rewardFrom(obs)).toBe(g.reward);
      expect(thetaUpFromCount(obs.count)).toBe(g.thetaUp);
    }
  });

  it("reproduces reference feature vectors bit-for-bit", () => {
    for (const g of GOLDEN) {
      const obs = parseObservation(g.line);
      const features = buildFeatures(DEFAULT_CONFIG, obs, 5.0, 60.0);
      expect(features).toEqual(g.features);
    }
  });

  it("orders encoded features as sin, cos, servo, velocities, timing", () => {
    expect(featureNames(DEFAULT_CONFIG)).toEqual([
      "sin_angle",
      "cos_angle",
      "servo",
      "pend_vel",
      "pend_acc",
      "arm_vel",
      "since_action",
      "age",
    ]);
  });

  it("keeps wrapped angles inside [-pi, pi)", () => {
    for (let i = -20; i <= 20; i += 1) {
      const x = i * 1.7;
      const w = wrapPi(x);
      expect(w).toBeGreaterThanOrEqual(-Math.PI);
      expect(w).toBeLessThan(Math.PI);
      // Same angle modulo a full turn.
      const delta = (x - w) / (2 * Math.PI);
      expect(Math.abs(delta - Math.round(delta))).toBeLessThan(1e-9);
    }
    expect(wrapPi(Math.PI)).toBe(-Math.PI);
  });

  it("caps the since-action feature at one second", () => {
    const obs = parseObservation("0,512,0.0,0.0,0.0,0.0");
    const capped = buildFeatures(DEFAULT_CONFIG, obs, 0.0, 5000.0);
    const atCap = buildFeatures(DEFAULT_CONFIG, obs, 0.0, 1000.0);
    expect(capped).toEqual(atCap);
    expect(capped[6]).toBe(5.0);
  });

  it("clamps negative ages to zero", () => {
    const obs = parseObservation("0,512,0.0,0.0,0.0,0.0");
    const features = buildFeatures(DEFAULT_CONFIG, obs, -3.0, 0.0);
    expect(features[7]).toBe(0.0);
  });

  it("rejects malformed lines", () => {
    expect(() => parseObservation("1,2,3")).toThrow(ObservationParseError);
    expect(() => parseObservation("1.5,2,0,0,0,0")).toThrow(ObservationParseError);
    expect(() => parseObservation("1,2,zero,0,0,0")).toThrow(ObservationParseError);
    expect(() => parseObservation("")).toThrow(ObservationParseError);
    expect(() => parseObservation("1,2,0,0,0,0,7")).toThrow(ObservationParseError);
  });

  it("smooths continuous commands with the exponential filter", () => {
    const filt = new ActionFilter(0.85);
    // Geometric approach toward a held command u: a_k = u * (1 - c^k).
    let expected = 0.0;
    for (let k = 1; k <= 10; k += 1) {
      const value = filt.apply(1.0);
      expected = 0.85 * expected + (1.0 - 0.85) * 1.0;
      expect(value).toBe(expected);
    }
    expect(() => new ActionFilter(1.0)).toThrow();
  });
});
