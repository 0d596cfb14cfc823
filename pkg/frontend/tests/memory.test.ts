import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { MotionForge } from "../src/index.js";

// The no-state-leak contract: the worker's high-water mark must stay flat
// across sustained call traffic. VmHWM only ever grows, so a bounded delta
// after warmup means steady-state allocations are being reused.

const CALLS = 10_000;
const WARMUP = 500;
// One worker-side spike this size would trip the bound; regular churn of
// the small per-call buffers stays far below it.
const ALLOWED_GROWTH_KB = 2048;

let client: MotionForge;

beforeAll(() => {
  client = new MotionForge();
});

afterAll(async () => {
  await client.close();
});

async function oneCall(i: number): Promise<void> {
  switch (i % 4) {
    case 0:
      await client.conditioningActive((i % 100) / 100);
      break;
    case 1:
      await client.sampleTimesteps(64, i);
      break;
    case 2: {
      const payload = new Uint8Array(1024).fill(i & 0xff);
      await client.echo([{ name: "buf", dtype: "uint8", shape: [1024], data: payload }]);
      break;
    }
    default: {
      const x = new Float64Array(128).fill(0.5);
      await client.forwardNoise({ dtype: "float64", shape: [128], data: x }, 0.8, i);
    }
  }
}

describe("memory high-water mark", () => {
  it(`stays flat across ${CALLS} bound calls`, async () => {
    for (let i = 0; i < WARMUP; i++) await oneCall(i);
    const before = await client.processStats();

    for (let i = 0; i < CALLS; i++) await oneCall(i);
    const after = await client.processStats();

    expect(before.vmHwmKb).toBeGreaterThan(0);
    const growth = after.vmHwmKb - before.vmHwmKb;
    expect(growth).toBeLessThanOrEqual(ALLOWED_GROWTH_KB);
  }, 300_000);
});
