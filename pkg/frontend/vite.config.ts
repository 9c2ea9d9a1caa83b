import { defineConfig } from "vitest/config";

export default defineConfig({
  // Dev server proxies API calls to a locally running `paperdeck serve`,
  // so the UI works same-origin without extra configuration.
  server: {
    proxy: {
      "/sessions": "http://127.0.0.1:8000",
    },
  },
  test: {
    environment: "jsdom",
    globals: true,
  },
});
