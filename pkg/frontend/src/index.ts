export {
  ABI_VERSION,
  BYTES_PER_ELEMENT,
  FrameReader,
  cStrides,
  decodePayload,
  dtypeOf,
  elementCount,
  encodeFrame,
  type ArraySpec,
  type ArrayView,
  type DType,
  type DecodedArray,
  type DecodedFrame,
  type NamedView,
  type TypedArray,
} from "./protocol.js";

export {
  MotionForge,
  MotionForgeError,
  motionforgeAbiVersion,
  type MotionForgeOptions,
  type PoseRequest,
  type PoseResult,
  type ProcessStats,
  type RenderRequest,
  type RenderResult,
  type SamplerConfig,
} from "./client.js";
