import { spawn, type ChildProcessByStdio } from "node:child_process";
import { once } from "node:events";
import path from "node:path";
import { fileURLToPath } from "node:url";
import type { Readable, Writable } from "node:stream";

import {
  ABI_VERSION,
  FrameReader,
  decodePayload,
  encodeFrame,
  type ArrayView,
  type DecodedArray,
  type NamedView,
} from "./protocol.js";

const WORKER_SCRIPT = path.join(
  path.dirname(fileURLToPath(import.meta.url)),
  "..",
  "worker",
  "motionforge_worker.py"
);

/** Failure reported by the pipeline, carrying its native exit-code taxonomy:
 * 2 config, 3 missing input, 4 contract violation, 5 internal. */
export class MotionForgeError extends Error {
  readonly code: number;

  constructor(message: string, code: number) {
    super(message);
    this.name = "MotionForgeError";
    this.code = code;
  }
}

export interface MotionForgeOptions {
  /** Python interpreter for the worker. Falls back to $MOTIONFORGE_PYTHON,
   * then "python3". */
  python?: string;
  /** Override the worker script location (tests only). */
  workerScript?: string;
  env?: NodeJS.ProcessEnv;
}

export interface SamplerConfig {
  mean?: number;
  std?: number;
  lo?: number;
  hi?: number;
}

export interface PoseRequest {
  modelPath: string;
  globalOrient: Float64Array;
  bodyPose: Float64Array;
  translation: Float64Array;
  betas?: number[];
}

export interface PoseResult {
  vertices: ArrayView;
  joints: ArrayView;
}

export interface RenderRequest {
  modelPath: string;
  /** Flattened pose vectors, one row per frame:
   * global_orient (3) | body_pose (3·(J−1)) | translation (3). */
  motion: ArrayView;
  fps: number;
  betas?: number[];
  /** Camera rows, 22 float64 per frame:
   * R row-major (9) | T (3) | fx fy cx cy | width height | bbox (4). */
  track: ArrayView;
  cropSide: number;
  /** Reference geometry for pelvis alignment, (K, V, 3) and (K, J, 3). */
  refVertices?: ArrayView;
  refJoints?: ArrayView;
  pelvisJoint?: number;
  near?: number;
  targetFrameCount?: number;
  targetFps?: number;
  workers?: number;
}

export interface RenderResult {
  /** One contiguous (N, H, W, 3) uint8 tensor. */
  frames: Uint8Array;
  shape: number[];
  fps: number;
}

export interface ProcessStats {
  vmRssKb: number;
  vmHwmKb: number;
}

interface Pending {
  resolve: (frame: { result: Record<string, unknown>; arrays: Map<string, DecodedArray> }) => void;
  reject: (err: Error) => void;
}

/**
 * Handle on one worker process. Requests are answered strictly in order;
 * concurrent calls queue on the worker's stdin and resolve as responses
 * stream back. Spawn a second instance for actual parallelism.
 */
export class MotionForge {
  private proc: ChildProcessByStdio<Writable, Readable, Readable> | null = null;
  private readonly reader = new FrameReader();
  private readonly pending: Pending[] = [];
  private readonly python: string;
  private readonly workerScript: string;
  private readonly env: NodeJS.ProcessEnv;
  private stderrTail = "";
  private closed = false;

  constructor(opts: MotionForgeOptions = {}) {
    this.python = opts.python ?? process.env.MOTIONFORGE_PYTHON ?? "python3";
    this.workerScript = opts.workerScript ?? WORKER_SCRIPT;
    this.env = opts.env ?? process.env;
  }

  private ensureProc(): ChildProcessByStdio<Writable, Readable, Readable> {
    if (this.closed) throw new MotionForgeError("client is closed", 5);
    if (this.proc) return this.proc;
    const proc = spawn(this.python, [this.workerScript], {
      stdio: ["pipe", "pipe", "pipe"],
      env: this.env,
    });
    proc.stdout.on("data", (chunk: Buffer) => this.onData(chunk));
    proc.stderr.on("data", (chunk: Buffer) => {
      this.stderrTail = (this.stderrTail + chunk.toString("utf8")).slice(-4096);
    });
    proc.on("error", (err) => this.failAll(`worker failed to start: ${err.message}`));
    proc.on("close", (code) => {
      this.proc = null;
      if (this.pending.length > 0) {
        this.failAll(`worker exited with code ${code}; stderr: ${this.stderrTail.trim()}`);
      }
    });
    this.proc = proc;
    return proc;
  }

  private onData(chunk: Buffer): void {
    let frames: Buffer[];
    try {
      frames = this.reader.push(chunk);
    } catch (err) {
      this.failAll(`protocol error: ${(err as Error).message}`);
      this.proc?.kill();
      return;
    }
    for (const frame of frames) {
      const waiter = this.pending.shift();
      if (!waiter) continue; // response with no caller; nothing to do
      try {
        const { header, arrays } = decodePayload(frame);
        if (header.ok === true) {
          waiter.resolve({ result: (header.result ?? {}) as Record<string, unknown>, arrays });
        } else {
          const code = typeof header.code === "number" ? header.code : 5;
          waiter.reject(new MotionForgeError(String(header.message ?? "worker error"), code));
        }
      } catch (err) {
        waiter.reject(new MotionForgeError(`bad response frame: ${(err as Error).message}`, 5));
      }
    }
  }

  private failAll(message: string): void {
    const err = new MotionForgeError(message, 5);
    while (this.pending.length > 0) this.pending.shift()!.reject(err);
  }

  /** Low-level request. Exposed for protocol tests; prefer the typed ops. */
  request(
    op: string,
    args: Record<string, unknown> = {},
    arrays: NamedView[] = []
  ): Promise<{ result: Record<string, unknown>; arrays: Map<string, DecodedArray> }> {
    const proc = this.ensureProc();
    const frame = encodeFrame({ op, args }, arrays);
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      proc.stdin.write(frame, (err) => {
        if (err) this.failAll(`write to worker failed: ${err.message}`);
      });
    });
  }

  async abiVersion(): Promise<number> {
    const { result } = await this.request("abi_version");
    return result.version as number;
  }

  async processStats(): Promise<ProcessStats> {
    const { result } = await this.request("process_stats");
    return { vmRssKb: result.vm_rss_kb as number, vmHwmKb: result.vm_hwm_kb as number };
  }

  /** Round-trips arrays through the worker unchanged. */
  async echo(arrays: NamedView[]): Promise<Map<string, DecodedArray>> {
    const res = await this.request("echo", {}, arrays);
    return res.arrays;
  }

  async sampleTimesteps(n: number, seed: number, cfg: SamplerConfig = {}): Promise<Float64Array> {
    const res = await this.request("sample_timesteps", { n, seed, ...cfg });
    return res.arrays.get("t")!.data as Float64Array;
  }

  async conditioningActive(t: number, cfg: SamplerConfig = {}): Promise<boolean> {
    const { result } = await this.request("conditioning_active", { t, ...cfg });
    return result.active as boolean;
  }

  async forwardNoise(
    x: ArrayView,
    t: number,
    seed: number,
    preset: "cosine" | "linear" = "cosine"
  ): Promise<ArrayView> {
    const res = await this.request("forward_noise", { t, seed, preset }, [{ name: "x", ...x }]);
    return res.arrays.get("x_t")!;
  }

  async pose(req: PoseRequest): Promise<PoseResult> {
    const args: Record<string, unknown> = { model_path: req.modelPath };
    if (req.betas) args.betas = req.betas;
    const res = await this.request("pose", args, [
      { name: "global_orient", dtype: "float64", shape: [req.globalOrient.length], data: req.globalOrient },
      { name: "body_pose", dtype: "float64", shape: [req.bodyPose.length], data: req.bodyPose },
      { name: "translation", dtype: "float64", shape: [req.translation.length], data: req.translation },
    ]);
    return { vertices: res.arrays.get("vertices")!, joints: res.arrays.get("joints")! };
  }

  async renderVideo(req: RenderRequest): Promise<RenderResult> {
    const args: Record<string, unknown> = {
      model_path: req.modelPath,
      fps: req.fps,
      crop_side: req.cropSide,
    };
    if (req.betas) args.betas = req.betas;
    if (req.pelvisJoint !== undefined) args.pelvis_joint = req.pelvisJoint;
    if (req.near !== undefined) args.near = req.near;
    if (req.targetFrameCount !== undefined) args.target_frame_count = req.targetFrameCount;
    if (req.targetFps !== undefined) args.target_fps = req.targetFps;
    if (req.workers !== undefined) args.workers = req.workers;
    const arrays: NamedView[] = [
      { name: "motion", ...req.motion },
      { name: "track", ...req.track },
    ];
    if (req.refVertices || req.refJoints) {
      if (!req.refVertices || !req.refJoints) {
        throw new MotionForgeError("refVertices and refJoints must be given together", 4);
      }
      arrays.push({ name: "ref_vertices", ...req.refVertices });
      arrays.push({ name: "ref_joints", ...req.refJoints });
    }
    const res = await this.request("render_video", args, arrays);
    const frames = res.arrays.get("frames")!;
    return { frames: frames.data as Uint8Array, shape: frames.shape, fps: res.result.fps as number };
  }

  /** Shut the worker down and wait for it to exit. Safe to call twice. */
  async close(): Promise<void> {
    this.closed = true;
    const proc = this.proc;
    if (!proc) return;
    this.proc = null;
    proc.stdin.end();
    if (proc.exitCode === null) await once(proc, "close");
  }
}

/** One-shot ABI query against a fresh worker. */
export async function motionforgeAbiVersion(opts: MotionForgeOptions = {}): Promise<number> {
  const client = new MotionForge(opts);
  try {
    return await client.abiVersion();
  } finally {
    await client.close();
  }
}

export { ABI_VERSION };
