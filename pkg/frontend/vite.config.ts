import { defineConfig } from "vitest/config";

export default defineConfig({
  base: "/ui/",
  build: { outDir: "dist" },
  server: {
    proxy: {
      // during development the API runs on the CLI's default port
      "/plan": "http://127.0.0.1:8000",
      "/records": "http://127.0.0.1:8000",
      "/audit": "http://127.0.0.1:8000",
      "/familiarity": "http://127.0.0.1:8000",
      "/review": "http://127.0.0.1:8000",
      "/resample": "http://127.0.0.1:8000",
      "/experiments": "http://127.0.0.1:8000",
      "/jobs": "http://127.0.0.1:8000",
      "/blobs": "http://127.0.0.1:8000",
      "/datasets": "http://127.0.0.1:8000",
    },
  },
  test: {
    environment: "jsdom",
  },
});
