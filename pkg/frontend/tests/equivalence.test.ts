import fs from "node:fs";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { MotionForge } from "../src/index.js";
import {
  dumpBuffers,
  mkWorkDir,
  parsePpm,
  renderGolden,
  writeCorpus,
  type BufferFixture,
} from "./helpers.js";

// The CLI is the reference implementation. Everything the binding returns
// for the fixture corpus must match it bitwise.

let client: MotionForge;
let corpus: string;
let goldenDir: string;
let fixture: BufferFixture;

beforeAll(() => {
  client = new MotionForge();
  const work = mkWorkDir("equiv");
  corpus = writeCorpus(work);
  goldenDir = path.join(work, "golden");
  renderGolden(work, goldenDir);
  fixture = dumpBuffers(corpus, path.join(work, "buffers"));
}, 120_000);

afterAll(async () => {
  await client.close();
});

describe("render equivalence", () => {
  it("matches the CLI golden frames bitwise", async () => {
    const { arrays, shapes } = fixture;
    const result = await client.renderVideo({
      modelPath: path.join(corpus, "model.json"),
      motion: { dtype: "float64", shape: shapes.motion!, data: arrays.motion! },
      fps: fixture.fps,
      betas: fixture.betas,
      track: { dtype: "float64", shape: shapes.track!, data: arrays.track! },
      cropSide: fixture.cropSide,
      refVertices: { dtype: "float64", shape: shapes.ref_vertices!, data: arrays.ref_vertices! },
      refJoints: { dtype: "float64", shape: shapes.ref_joints!, data: arrays.ref_joints! },
      targetFrameCount: 49,
      targetFps: 8,
      workers: 1,
    });

    const [n, h, w, c] = result.shape;
    expect(result.fps).toBe(8);
    expect(c).toBe(3);
    expect(n).toBe(49);

    const goldens = fs
      .readdirSync(goldenDir)
      .filter((f) => f.endsWith(".ppm"))
      .sort();
    expect(goldens).toHaveLength(n!);

    const frameBytes = h! * w! * 3;
    expect(result.frames.length).toBe(n! * frameBytes);
    for (let i = 0; i < n!; i++) {
      const golden = parsePpm(path.join(goldenDir, goldens[i]!));
      expect([golden.width, golden.height]).toEqual([w, h]);
      const bound = Buffer.from(
        result.frames.buffer,
        result.frames.byteOffset + i * frameBytes,
        frameBytes
      );
      // Buffer.compare, not toEqual: a pixel diff should say which frame.
      expect(
        bound.compare(golden.pixels) === 0 ? "match" : `frame ${i} differs`
      ).toBe("match");
    }
  }, 120_000);

  it("renders identically across repeated bound calls", async () => {
    const { arrays, shapes } = fixture;
    const req = {
      modelPath: path.join(corpus, "model.json"),
      motion: { dtype: "float64" as const, shape: shapes.motion!, data: arrays.motion! },
      fps: fixture.fps,
      betas: fixture.betas,
      track: { dtype: "float64" as const, shape: shapes.track!, data: arrays.track! },
      cropSide: fixture.cropSide,
      targetFrameCount: 49,
      targetFps: 8,
    };
    const a = await client.renderVideo(req);
    const b = await client.renderVideo(req);
    expect(Buffer.from(a.frames).equals(Buffer.from(b.frames))).toBe(true);
  }, 120_000);
});

describe("sampler equivalence", () => {
  it("reproduces the truncated-normal mean within 0.001 on 1e6 draws", async () => {
    const n = 1_000_000;
    const t = await client.sampleTimesteps(n, 0);
    expect(t.length).toBe(n);
    let sum = 0;
    let lo = 1;
    let hi = 0;
    for (const v of t) {
      sum += v;
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
    const mean = sum / n;
    expect(lo).toBeGreaterThanOrEqual(0.6);
    expect(hi).toBeLessThanOrEqual(1.0);
    expect(Math.abs(mean - 0.8287453)).toBeLessThanOrEqual(0.001);
  }, 60_000);
});
