/**
 * TGVOL1 volume codec.
 *
 * Fixed 52-byte little-endian header followed by the voxel payload:
 *
 *     magic    8 bytes   "TGVOL1\0\0"
 *     dtype    u32       0 = uint8 labels, 1 = float32 values, 2 = byte mask
 *     channels u32       1 for labels/masks, C for float volumes
 *     depth    u32
 *     height   u32
 *     width    u32
 *     dz dy dx f64       voxel spacing, millimetres
 *
 * Payload is row-major (depth, height, width), channel-major for float
 * volumes. Encoding the same volume twice yields identical bytes.
 */

export const HEADER_SIZE = 52;
export const MAGIC = new Uint8Array([0x54, 0x47, 0x56, 0x4f, 0x4c, 0x31, 0, 0]);

export const DTYPE_LABELS = 0;
export const DTYPE_FLOAT = 1;
export const DTYPE_MASK = 2;

export type Dims = [depth: number, height: number, width: number];
export type SpacingMm = [dz: number, dy: number, dx: number];

export interface DecodedVolume {
  dtype: number;
  channels: number;
  dims: Dims;
  spacing: SpacingMm;
  /** Uint8Array for labels/masks, Float32Array for float volumes. */
  data: Uint8Array | Float32Array;
}

export function voxelCount(dims: Dims): number {
  return dims[0] * dims[1] * dims[2];
}

export function checkDims(dims: Dims): void {
  if (dims.length !== 3 || dims.some((d) => !Number.isInteger(d) || d < 1)) {
    throw new Error(`dims must be three positive integers, got ${JSON.stringify(dims)}`);
  }
}

function header(dtype: number, channels: number, dims: Dims, spacing: SpacingMm): Uint8Array {
  const buf = new Uint8Array(HEADER_SIZE);
  buf.set(MAGIC, 0);
  const view = new DataView(buf.buffer);
  view.setUint32(8, dtype, true);
  view.setUint32(12, channels, true);
  view.setUint32(16, dims[0], true);
  view.setUint32(20, dims[1], true);
  view.setUint32(24, dims[2], true);
  view.setFloat64(28, spacing[0], true);
  view.setFloat64(36, spacing[1], true);
  view.setFloat64(44, spacing[2], true);
  return buf;
}

function concat(head: Uint8Array, payload: Uint8Array): Uint8Array {
  const out = new Uint8Array(head.length + payload.length);
  out.set(head, 0);
  out.set(payload, head.length);
  return out;
}

export function encodeLabels(
  labels: Uint8Array,
  dims: Dims,
  spacing: SpacingMm = [1, 1, 1],
): Uint8Array {
  checkDims(dims);
  if (labels.length !== voxelCount(dims)) {
    throw new Error(`label payload holds ${labels.length} voxels, dims need ${voxelCount(dims)}`);
  }
  return concat(header(DTYPE_LABELS, 1, dims, spacing), labels);
}

export function encodeMask(
  mask: Uint8Array,
  dims: Dims,
  spacing: SpacingMm = [1, 1, 1],
): Uint8Array {
  checkDims(dims);
  if (mask.length !== voxelCount(dims)) {
    throw new Error(`mask payload holds ${mask.length} voxels, dims need ${voxelCount(dims)}`);
  }
  return concat(header(DTYPE_MASK, 1, dims, spacing), mask);
}

export function encodeFloatVolume(
  values: Float32Array,
  channels: number,
  dims: Dims,
  spacing: SpacingMm = [1, 1, 1],
): Uint8Array {
  checkDims(dims);
  if (!Number.isInteger(channels) || channels < 1) {
    throw new Error(`channels must be a positive integer, got ${channels}`);
  }
  if (values.length !== channels * voxelCount(dims)) {
    throw new Error(
      `float payload holds ${values.length} values, expected ${channels * voxelCount(dims)}`,
    );
  }
  // serialize little-endian regardless of host byte order
  const payload = new Uint8Array(values.length * 4);
  const view = new DataView(payload.buffer);
  for (let i = 0; i < values.length; i++) view.setFloat32(i * 4, values[i], true);
  return concat(header(DTYPE_FLOAT, channels, dims, spacing), payload);
}

export function decode(blob: Uint8Array): DecodedVolume {
  if (blob.length < HEADER_SIZE) throw new Error("blob too short for a TGVOL1 header");
  for (let i = 0; i < MAGIC.length; i++) {
    if (blob[i] !== MAGIC[i]) throw new Error("bad TGVOL1 magic");
  }
  const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  const dtype = view.getUint32(8, true);
  const channels = view.getUint32(12, true);
  const dims: Dims = [view.getUint32(16, true), view.getUint32(20, true), view.getUint32(24, true)];
  const spacing: SpacingMm = [
    view.getFloat64(28, true),
    view.getFloat64(36, true),
    view.getFloat64(44, true),
  ];
  const voxels = voxelCount(dims);
  const payload = blob.subarray(HEADER_SIZE);
  if (dtype === DTYPE_LABELS || dtype === DTYPE_MASK) {
    if (payload.length !== voxels) throw new Error("payload length mismatch");
    return { dtype, channels, dims, spacing, data: payload.slice() };
  }
  if (dtype === DTYPE_FLOAT) {
    if (payload.length !== channels * voxels * 4) throw new Error("payload length mismatch");
    const data = new Float32Array(channels * voxels);
    for (let i = 0; i < data.length; i++) data[i] = view.getFloat32(HEADER_SIZE + i * 4, true);
    return { dtype, channels, dims, spacing, data };
  }
  throw new Error(`unknown dtype code ${dtype}`);
}
