/**
 * Named environment registry in the Gym style: construct bridges by id
 * string so training scripts can stay agnostic of construction details.
 */

import { BridgeConfig, PendulumWireBridge } from "./bridge.js";

export type BridgeFactory = (overrides?: Partial<BridgeConfig>) => PendulumWireBridge;

const registry = new Map<string, BridgeFactory>();

export function register(name: string, factory: BridgeFactory): void {
  if (registry.has(name)) {
    throw new Error(`environment id already registered: ${name}`);
  }
  registry.set(name, factory);
}

export function registeredIds(): string[] {
  return [...registry.keys()];
}

export function make(name: string, overrides?: Partial<BridgeConfig>): PendulumWireBridge {
  const factory = registry.get(name);
  if (factory === undefined) {
    throw new Error(`unknown environment id: ${name} (known: ${registeredIds().join(", ") || "none"})`);
  }
  return factory(overrides);
}

register("PendulumR-wire-v0", (overrides = {}) => new PendulumWireBridge(overrides));
