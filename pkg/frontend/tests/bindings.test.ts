import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ABI_VERSION, MotionForge, MotionForgeError, motionforgeAbiVersion } from "../src/index.js";
import { mkWorkDir, writeCorpus } from "./helpers.js";

let client: MotionForge;
let corpus: string;

beforeAll(() => {
  client = new MotionForge();
  corpus = writeCorpus(mkWorkDir("bindings"));
});

afterAll(async () => {
  await client.close();
});

describe("handshake", () => {
  it("reports the ABI version", async () => {
    await expect(client.abiVersion()).resolves.toBe(ABI_VERSION);
    await expect(motionforgeAbiVersion()).resolves.toBe(ABI_VERSION);
  });

  it("fails loudly when the interpreter does not exist", async () => {
    const broken = new MotionForge({ python: "/no/such/python" });
    await expect(broken.abiVersion()).rejects.toThrow(/worker/);
    await broken.close();
  });
});

describe("echo", () => {
  it("round-trips float64 bitwise through the worker", async () => {
    const data = new Float64Array([0, -0, NaN, 1e-300, -Infinity, Math.PI]);
    const out = await client.echo([{ name: "x", dtype: "float64", shape: [6], data }]);
    const back = out.get("x")!;
    expect(back.shape).toEqual([6]);
    expect(Buffer.from(back.data.buffer, back.data.byteOffset, back.data.byteLength)).toEqual(
      Buffer.from(data.buffer)
    );
  });

  it("round-trips float32 and uint8", async () => {
    const out = await client.echo([
      { name: "f", dtype: "float32", shape: [2], data: new Float32Array([1.5, -0.25]) },
      { name: "u", dtype: "uint8", shape: [2, 2], data: new Uint8Array([1, 2, 3, 4]) },
    ]);
    expect(Array.from(out.get("f")!.data as Float32Array)).toEqual([1.5, -0.25]);
    expect(out.get("u")!.shape).toEqual([2, 2]);
  });

  it("answers queued requests in order", async () => {
    const results = await Promise.all(
      [0, 1, 2, 3, 4].map((i) =>
        client
          .echo([{ name: "x", dtype: "float64", shape: [1], data: new Float64Array([i]) }])
          .then((m) => (m.get("x")!.data as Float64Array)[0])
      )
    );
    expect(results).toEqual([0, 1, 2, 3, 4]);
  });
});

describe("sampler", () => {
  it("is deterministic per seed", async () => {
    const a = await client.sampleTimesteps(1000, 7);
    const b = await client.sampleTimesteps(1000, 7);
    const c = await client.sampleTimesteps(1000, 8);
    expect(Buffer.from(a.buffer, a.byteOffset, a.byteLength)).toEqual(
      Buffer.from(b.buffer, b.byteOffset, b.byteLength)
    );
    expect(Buffer.from(a.buffer, a.byteOffset, a.byteLength)).not.toEqual(
      Buffer.from(c.buffer, c.byteOffset, c.byteLength)
    );
  });

  it("respects the truncation window", async () => {
    const t = await client.sampleTimesteps(20000, 0);
    let lo = 1;
    let hi = 0;
    for (const v of t) {
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
    expect(lo).toBeGreaterThanOrEqual(0.6);
    expect(hi).toBeLessThanOrEqual(1.0);
  });

  it("honors custom sampler parameters", async () => {
    const t = await client.sampleTimesteps(5000, 3, { mean: 0.2, std: 0.05, lo: 0.1, hi: 0.3 });
    for (const v of t) {
      expect(v).toBeGreaterThanOrEqual(0.1);
      expect(v).toBeLessThanOrEqual(0.3);
    }
  });

  it("rejects an empty window as a contract violation", async () => {
    const err = await client.sampleTimesteps(10, 0, { lo: 0.9, hi: 0.2 }).catch((e) => e);
    expect(err).toBeInstanceOf(MotionForgeError);
    expect(err.code).toBe(4);
  });
});

describe("conditioning gate", () => {
  it("is inclusive at both endpoints", async () => {
    expect(await client.conditioningActive(0.6)).toBe(true);
    expect(await client.conditioningActive(1.0)).toBe(true);
    expect(await client.conditioningActive(0.599)).toBe(false);
    expect(await client.conditioningActive(0.0)).toBe(false);
  });

  it("rejects t outside [0, 1] with code 4", async () => {
    const err = await client.conditioningActive(1.5).catch((e) => e);
    expect(err).toBeInstanceOf(MotionForgeError);
    expect(err.code).toBe(4);
  });
});

describe("forward noise", () => {
  it("is the identity at t=0, bitwise", async () => {
    const x = new Float64Array([0.25, -3.5, 1e-12, 7]);
    const out = await client.forwardNoise({ dtype: "float64", shape: [2, 2], data: x }, 0, 0);
    expect(out.shape).toEqual([2, 2]);
    expect(Buffer.from(out.data.buffer, out.data.byteOffset, out.data.byteLength)).toEqual(
      Buffer.from(x.buffer)
    );
  });

  it("is deterministic per seed and preserves shape", async () => {
    const x = new Float64Array(24).fill(1);
    const view = { dtype: "float64" as const, shape: [4, 6], data: x };
    const a = await client.forwardNoise(view, 0.7, 5);
    const b = await client.forwardNoise(view, 0.7, 5);
    expect(a.shape).toEqual([4, 6]);
    expect(Buffer.from(a.data.buffer, a.data.byteOffset, a.data.byteLength)).toEqual(
      Buffer.from(b.data.buffer, b.data.byteOffset, b.data.byteLength)
    );
  });

  it("rejects non-finite input with code 4", async () => {
    const x = new Float64Array([1, NaN]);
    const err = await client
      .forwardNoise({ dtype: "float64", shape: [2], data: x }, 0.5, 0)
      .catch((e) => e);
    expect(err).toBeInstanceOf(MotionForgeError);
    expect(err.code).toBe(4);
  });
});

describe("pose", () => {
  it("marshals a rest pose and applies translation exactly", async () => {
    const modelPath = path.join(corpus, "model.json");
    const rest = await client.pose({
      modelPath,
      globalOrient: new Float64Array(3),
      bodyPose: new Float64Array(6),
      translation: new Float64Array(3),
    });
    const shifted = await client.pose({
      modelPath,
      globalOrient: new Float64Array(3),
      bodyPose: new Float64Array(6),
      translation: new Float64Array([1, 2, 3]),
    });
    expect(rest.vertices.shape[1]).toBe(3);
    expect(rest.joints.shape).toEqual([3, 3]);
    const a = rest.vertices.data as Float64Array;
    const b = shifted.vertices.data as Float64Array;
    expect(b.length).toBe(a.length);
    for (let i = 0; i < a.length; i += 3) {
      // dyadic translation makes the float addition exact
      expect(b[i]).toBe(a[i]! + 1);
      expect(b[i + 1]).toBe(a[i + 1]! + 2);
      expect(b[i + 2]).toBe(a[i + 2]! + 3);
    }
  });

  it("maps a missing model file to code 3", async () => {
    const err = await client
      .pose({
        modelPath: "/no/such/model.json",
        globalOrient: new Float64Array(3),
        bodyPose: new Float64Array(6),
        translation: new Float64Array(3),
      })
      .catch((e) => e);
    expect(err).toBeInstanceOf(MotionForgeError);
    expect(err.code).toBe(3);
  });
});

describe("descriptor enforcement", () => {
  it("rejects float32 where the op needs float64", async () => {
    const err = await client
      .request("pose", { model_path: path.join(corpus, "model.json") }, [
        { name: "global_orient", dtype: "float32", shape: [3], data: new Float32Array(3) },
        { name: "body_pose", dtype: "float64", shape: [6], data: new Float64Array(6) },
        { name: "translation", dtype: "float64", shape: [3], data: new Float64Array(3) },
      ])
      .catch((e) => e);
    expect(err).toBeInstanceOf(MotionForgeError);
    expect(err.code).toBe(4);
    expect(err.message).toMatch(/expected float64/);
  });

  it("rejects non-contiguous strides with code 4", async () => {
    const err = await client
      .request("echo", {}, [
        {
          name: "x",
          dtype: "float64",
          shape: [2, 2],
          strides: [1, 2], // column-major, not C order
          data: new Float64Array(4),
        },
      ])
      .catch((e) => e);
    expect(err).toBeInstanceOf(MotionForgeError);
    expect(err.code).toBe(4);
    expect(err.message).toMatch(/C-contiguous/);
  });

  it("rejects an unknown op with code 4", async () => {
    const err = await client.request("transmogrify").catch((e) => e);
    expect(err).toBeInstanceOf(MotionForgeError);
    expect(err.code).toBe(4);
  });

  it("keeps serving after an error response", async () => {
    await expect(client.request("transmogrify")).rejects.toThrow();
    await expect(client.abiVersion()).resolves.toBe(ABI_VERSION);
  });
});

describe("lifecycle", () => {
  it("close is idempotent and later calls fail cleanly", async () => {
    const spare = new MotionForge();
    await spare.abiVersion();
    await spare.close();
    await spare.close();
    await expect(spare.abiVersion()).rejects.toThrow(/closed/);
  });

  it("exposes worker process stats", async () => {
    const stats = await client.processStats();
    expect(stats.vmRssKb).toBeGreaterThan(0);
    expect(stats.vmHwmKb).toBeGreaterThanOrEqual(stats.vmRssKb);
  });
});
