/**
 * Binary .act activation capture format.
 *
 * Layout (all integers little-endian u32):
 *   offset 0   magic   "ACTV"
 *   offset 4   version 1
 *   offset 8   layer id
 *   offset 12  N, 16 H, 20 W, 24 C
 *   offset 28  dtype   1 = float32 little-endian
 *   offset 32  payload N*H*W*C 4-byte floats, channels fastest
 */

export const MAGIC = 'ACTV'
export const VERSION = 1
export const DTYPE_F32 = 1
export const HEADER_BYTES = 32

export class FormatError extends Error {}
export class LengthError extends FormatError {}

export interface ActHeader {
  layerId: number
  n: number
  h: number
  w: number
  c: number
}

/** Batches needed so the sample count reaches ~100x the channel count. */
export function requiredBatches(c: number, h: number, w: number, n: number): number {
  if (c < 1 || h < 1 || w < 1 || n < 1) {
    throw new RangeError(`all dims must be >= 1, got C=${c} H=${h} W=${w} N=${n}`)
  }
  return Math.max(1, Math.ceil((100 * c) / (h * w * n)))
}

export function captureFilename(layerId: number, batch: number): string {
  return `layer${layerId}_batch${batch}.act`
}

export function encodeActivation(header: ActHeader, data: Float32Array): Buffer {
  const { layerId, n, h, w, c } = header
  const count = n * h * w * c
  if (data.length !== count) {
    throw new LengthError(`payload has ${data.length} floats, header says ${count}`)
  }
  const buf = Buffer.alloc(HEADER_BYTES + count * 4)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(VERSION, 4)
  buf.writeUInt32LE(layerId, 8)
  buf.writeUInt32LE(n, 12)
  buf.writeUInt32LE(h, 16)
  buf.writeUInt32LE(w, 20)
  buf.writeUInt32LE(c, 24)
  buf.writeUInt32LE(DTYPE_F32, 28)
  for (let i = 0; i < count; i++) {
    buf.writeFloatLE(data[i], HEADER_BYTES + 4 * i)
  }
  return buf
}

export function decodeActivation(buf: Buffer): { header: ActHeader; data: Float32Array } {
  if (buf.length < HEADER_BYTES) {
    throw new LengthError(`header truncated: ${buf.length} bytes`)
  }
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new FormatError(`bad magic at offset 0: ${buf.toString('ascii', 0, 4)}`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== VERSION) throw new FormatError(`unsupported version ${version}`)
  const header: ActHeader = {
    layerId: buf.readUInt32LE(8),
    n: buf.readUInt32LE(12),
    h: buf.readUInt32LE(16),
    w: buf.readUInt32LE(20),
    c: buf.readUInt32LE(24),
  }
  const dtype = buf.readUInt32LE(28)
  if (dtype !== DTYPE_F32) throw new FormatError(`unsupported dtype code ${dtype}`)
  if (header.n < 1 || header.h < 1 || header.w < 1 || header.c < 1) {
    throw new FormatError(`header dims must be >= 1`)
  }
  const count = header.n * header.h * header.w * header.c
  if (buf.length < HEADER_BYTES + count * 4) {
    throw new LengthError(
      `payload truncated: expected ${count * 4} bytes, got ${buf.length - HEADER_BYTES}`,
    )
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i)
  }
  return { header, data }
}
