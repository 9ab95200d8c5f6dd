import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the integration test boots the real service and replays a week of data
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
