import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: {
        // The test server runs on a random local port, so requests from the
        // DOM sandbox are cross-origin; skip the browser origin checks.
        settings: { fetch: { disableSameOriginPolicy: true } },
      },
    },
    include: ["test/**/*.test.ts"],
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
