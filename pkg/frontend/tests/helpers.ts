import { spawnSync } from "node:child_process";
import fs from "node:fs";
import os from "node:os";
import path from "node:path";

export function pythonBin(): string {
  return process.env.MOTIONFORGE_PYTHON ?? "python3";
}

export function mkWorkDir(label: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), `mfbind-${label}-`));
}

export function runPython(args: string[], cwd: string): void {
  const res = spawnSync(pythonBin(), args, { cwd, encoding: "utf8" });
  if (res.status !== 0) {
    throw new Error(
      `${pythonBin()} ${args.join(" ")} exited ${res.status}\nstdout: ${res.stdout}\nstderr: ${res.stderr}`
    );
  }
}

/** Generate the demo corpus (model, motion, track, reference, config). */
export function writeCorpus(cwd: string): string {
  runPython(["-c", "from motionforge.synthetic import write_demo_corpus; write_demo_corpus('corpus')"], cwd);
  return path.join(cwd, "corpus");
}

/** Render CLI golden frames for the corpus into an absolute directory. */
export function renderGolden(cwd: string, outDir: string): void {
  runPython(["-m", "motionforge", "render", "--config", "corpus/config.json", "--out", outDir, "--seed", "0"], cwd);
}

const DUMP_SCRIPT = `
import json, sys
import numpy as np
import motionforge as mf

corpus, out = sys.argv[1], sys.argv[2]
motion = mf.load_motion(f"{corpus}/motion.json")
track = mf.load_track(f"{corpus}/track.json")
ref = mf.load_reference_frames(f"{corpus}/reference.json")

vec = mf.flatten(motion)
rows = []
for f in track.frames:
    i, e = f.intrinsics, f.extrinsics
    rows.append(np.concatenate([
        e.R.ravel(), e.T,
        [i.fx, i.fy, i.cx, i.cy, float(i.width), float(i.height)],
        f.bbox,
    ]))
trk = np.stack(rows)
rv = np.stack([r.vertices for r in ref])
rj = np.stack([r.joints for r in ref])

for name, arr in [("motion", vec), ("track", trk), ("ref_vertices", rv), ("ref_joints", rj)]:
    with open(f"{out}/{name}.bin", "wb") as fh:
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
meta = {
    "shapes": {"motion": vec.shape, "track": trk.shape,
               "ref_vertices": rv.shape, "ref_joints": rj.shape},
    "fps": motion.fps,
    "betas": motion.betas.tolist(),
    "crop_side": track.crop_side,
}
with open(f"{out}/meta.json", "w") as fh:
    json.dump(meta, fh)
`;

export interface BufferFixture {
  shapes: Record<string, number[]>;
  fps: number;
  betas: number[];
  cropSide: number;
  arrays: Record<string, Float64Array>;
}

/** Export the corpus as raw little-endian float64 buffers, via the
 * pipeline's own public loaders. */
export function dumpBuffers(corpusDir: string, outDir: string): BufferFixture {
  fs.mkdirSync(outDir, { recursive: true });
  runPython(["-c", DUMP_SCRIPT, corpusDir, outDir], path.dirname(corpusDir));
  const meta = JSON.parse(fs.readFileSync(path.join(outDir, "meta.json"), "utf8"));
  const arrays: Record<string, Float64Array> = {};
  for (const name of Object.keys(meta.shapes)) {
    arrays[name] = readF64(path.join(outDir, `${name}.bin`));
  }
  return {
    shapes: meta.shapes,
    fps: meta.fps,
    betas: meta.betas,
    cropSide: meta.crop_side,
    arrays,
  };
}

/** Read a raw little-endian float64 file into an aligned Float64Array. */
export function readF64(file: string): Float64Array {
  const buf = fs.readFileSync(file);
  // slice() of the underlying ArrayBuffer copies to offset 0, so the view
  // is always 8-aligned no matter how the Buffer pool carved it up.
  return new Float64Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength));
}

export interface PpmImage {
  width: number;
  height: number;
  pixels: Buffer;
}

export function parsePpm(file: string): PpmImage {
  const raw = fs.readFileSync(file);
  const match = /^P6\n(\d+) (\d+)\n255\n/.exec(raw.toString("latin1", 0, 32));
  if (!match) throw new Error(`${file}: not a P6 ppm written by this pipeline`);
  const width = Number(match[1]);
  const height = Number(match[2]);
  const pixels = raw.subarray(match[0].length);
  if (pixels.length !== width * height * 3) {
    throw new Error(`${file}: ${pixels.length} payload bytes for ${width}x${height}`);
  }
  return { width, height, pixels };
}
