import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // Differential tests drive a live rig subprocess; give them headroom.
    testTimeout: 120_000,
    hookTimeout: 60_000,
    pool: "forks",
  },
});
