/**
 * Wire protocol between the Node client and the Python worker.
 *
 * Every message, in both directions, is one frame:
 *
 *     u32le payloadLength, payload
 *
 * and the payload is:
 *
 *     u32le headerLength, header (UTF-8 JSON), zero padding, blob area
 *
 * The blob area starts at the first multiple of 8 past the header. The
 * header lists its blobs under "arrays":
 *
 *     {name, dtype, shape, offset, nbytes, strides?}
 *
 * where offset is relative to the blob area and always a multiple of 8,
 * so offsets are independent of the header's own length and a float64
 * view never needs realignment. dtype is one of float32 | float64 |
 * uint8; shape is row-major; strides, when present, are element strides
 * that must describe a C-contiguous layout (anything else is rejected by
 * the worker with error code 4). Numbers cross the wire little-endian,
 * the only byte order either side of this package runs on.
 */

export const ABI_VERSION = 1;

/** Refuse frames above this size rather than let a corrupt length prefix
 * drive a giant allocation. */
export const MAX_FRAME_BYTES = 1 << 30;

export type DType = "float32" | "float64" | "uint8";

export type TypedArray = Float32Array | Float64Array | Uint8Array;

export const BYTES_PER_ELEMENT: Record<DType, number> = {
  float32: 4,
  float64: 8,
  uint8: 1,
};

/** A typed buffer plus its logical shape. Strides are element counts and
 * optional; omitted means C-contiguous. */
export interface ArrayView {
  dtype: DType;
  shape: number[];
  data: TypedArray;
  strides?: number[];
}

export interface NamedView extends ArrayView {
  name: string;
}

/** Wire-level blob descriptor as it appears in a frame header. */
export interface ArraySpec {
  name: string;
  dtype: DType;
  shape: number[];
  offset: number;
  nbytes: number;
  strides?: number[];
}

export function elementCount(shape: number[]): number {
  let n = 1;
  for (const d of shape) {
    if (!Number.isInteger(d) || d < 0) {
      throw new RangeError(`bad dimension ${d} in shape [${shape}]`);
    }
    n *= d;
  }
  return n;
}

export function cStrides(shape: number[]): number[] {
  const out = new Array<number>(shape.length);
  let acc = 1;
  for (let i = shape.length - 1; i >= 0; i--) {
    out[i] = acc;
    acc *= shape[i]!;
  }
  return out;
}

export function dtypeOf(data: TypedArray): DType {
  if (data instanceof Float64Array) return "float64";
  if (data instanceof Float32Array) return "float32";
  if (data instanceof Uint8Array) return "uint8";
  throw new TypeError("unsupported typed array");
}

function align8(n: number): number {
  return (n + 7) & ~7;
}

/** Serialize one message. Blob bytes are copied out of the views, so the
 * caller's arrays may be reused immediately. */
export function encodeFrame(header: Record<string, unknown>, arrays: NamedView[] = []): Buffer {
  const specs: ArraySpec[] = [];
  const seen = new Set<string>();
  let cursor = 0;
  for (const a of arrays) {
    if (seen.has(a.name)) throw new RangeError(`duplicate array name ${a.name}`);
    seen.add(a.name);
    const n = elementCount(a.shape);
    if (n !== a.data.length) {
      throw new RangeError(
        `array ${a.name}: shape [${a.shape}] implies ${n} elements, buffer has ${a.data.length}`
      );
    }
    const spec: ArraySpec = {
      name: a.name,
      dtype: dtypeOf(a.data),
      shape: a.shape.slice(),
      offset: cursor,
      nbytes: a.data.byteLength,
    };
    if (a.strides) spec.strides = a.strides.slice();
    specs.push(spec);
    cursor = align8(cursor + spec.nbytes);
  }

  const headerBuf = Buffer.from(JSON.stringify({ ...header, arrays: specs }), "utf8");
  const blobStart = align8(4 + headerBuf.length);
  const payloadLen = arrays.length ? blobStart + cursor : 4 + headerBuf.length;
  if (payloadLen > MAX_FRAME_BYTES) {
    throw new RangeError(`frame of ${payloadLen} bytes exceeds limit`);
  }
  const out = Buffer.alloc(4 + payloadLen);
  out.writeUInt32LE(payloadLen, 0);
  out.writeUInt32LE(headerBuf.length, 4);
  headerBuf.copy(out, 8);
  for (let i = 0; i < specs.length; i++) {
    const a = arrays[i]!;
    const src = Buffer.from(a.data.buffer, a.data.byteOffset, a.data.byteLength);
    src.copy(out, 4 + blobStart + specs[i]!.offset);
  }
  return out;
}

export interface DecodedArray extends ArrayView {
  /** False when alignment forced a copy out of the frame buffer. */
  zeroCopy: boolean;
}

export interface DecodedFrame {
  header: Record<string, unknown>;
  arrays: Map<string, DecodedArray>;
}

function makeView(payload: Buffer, blobStart: number, spec: ArraySpec): DecodedArray {
  const { dtype, shape, nbytes } = spec;
  const itemsize = BYTES_PER_ELEMENT[dtype];
  if (itemsize === undefined) throw new RangeError(`unknown dtype ${dtype}`);
  const count = elementCount(shape);
  if (count * itemsize !== nbytes) {
    throw new RangeError(`array ${spec.name}: ${nbytes} bytes for shape [${shape}] ${dtype}`);
  }
  const offset = blobStart + spec.offset;
  if (spec.offset < 0 || offset + nbytes > payload.length) {
    throw new RangeError(`array ${spec.name}: blob [${offset}, ${offset + nbytes}) outside payload`);
  }
  const abs = payload.byteOffset + offset;
  const ctor = dtype === "float64" ? Float64Array : dtype === "float32" ? Float32Array : Uint8Array;
  if (abs % itemsize === 0) {
    // Buffers here are never backed by a SharedArrayBuffer.
    return { dtype, shape, data: new ctor(payload.buffer as ArrayBuffer, abs, count), zeroCopy: true };
  }
  const copy = Buffer.alloc(nbytes);
  payload.copy(copy, 0, offset, offset + nbytes);
  return { dtype, shape, data: new ctor(copy.buffer, copy.byteOffset, count), zeroCopy: false };
}

export function decodePayload(payload: Buffer): DecodedFrame {
  if (payload.length < 4) throw new RangeError("payload shorter than its header length field");
  const headerLen = payload.readUInt32LE(0);
  if (4 + headerLen > payload.length) {
    throw new RangeError(`header of ${headerLen} bytes overruns ${payload.length}-byte payload`);
  }
  const header = JSON.parse(payload.toString("utf8", 4, 4 + headerLen)) as Record<string, unknown>;
  const blobStart = align8(4 + headerLen);
  const arrays = new Map<string, DecodedArray>();
  const specs = (header.arrays ?? []) as ArraySpec[];
  for (const spec of specs) {
    arrays.set(spec.name, makeView(payload, blobStart, spec));
  }
  return { header, arrays };
}

/**
 * Incremental frame splitter over an arbitrary chunk stream.
 *
 * Complete payloads are copied into fresh unpooled buffers (byteOffset 0)
 * so every 8-aligned blob offset is absolutely aligned and the decoded
 * typed arrays can borrow the frame buffer instead of copying.
 */
export class FrameReader {
  private pending: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Buffer[] {
    this.pending = this.pending.length === 0 ? chunk : Buffer.concat([this.pending, chunk]);
    const out: Buffer[] = [];
    while (this.pending.length >= 4) {
      const payloadLen = this.pending.readUInt32LE(0);
      if (payloadLen > MAX_FRAME_BYTES) {
        throw new RangeError(`incoming frame claims ${payloadLen} bytes`);
      }
      if (this.pending.length < 4 + payloadLen) break;
      const frame = Buffer.allocUnsafeSlow(payloadLen);
      this.pending.copy(frame, 0, 4, 4 + payloadLen);
      out.push(frame);
      this.pending = this.pending.subarray(4 + payloadLen);
    }
    return out;
  }

  bufferedBytes(): number {
    return this.pending.length;
  }
}
