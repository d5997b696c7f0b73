/**
 * Export activations from a model into .act files + manifest and config JSON.
 *
 * Batches come from a raw float32 file when given, otherwise from a seeded
 * PRNG.  Every conv layer gets one file per batch; a warning is printed when
 * the batch count is below a layer's sample-sufficiency requirement (the
 * analyzer flags this too).
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

import { captureFilename, encodeActivation, requiredBatches } from './actformat'
import {
  PreparedModel,
  buildRegistryModel,
  loadModelFromPath,
  prepareLoadedModel,
} from './models'

export interface ExportOptions {
  model: string // registry name or path to a model.json
  out: string
  batches: number
  batchSize?: number
  data?: string // raw little-endian float32 file, N*H*W*C per sample
  seed?: number
}

export interface ManifestLayer {
  layer_id: number
  channels: number
  height: number
  width: number
  capture_point: string
  required_batches: number
  batches_written: number
}

export interface ExportManifest {
  model: string
  dataset: string
  batch_size: number
  batches: number
  layers: ManifestLayer[]
}

function mulberry32(seed: number): () => number {
  let t = seed >>> 0
  return () => {
    t += 0x6d2b79f5
    let r = Math.imul(t ^ (t >>> 15), t | 1)
    r ^= r + Math.imul(r ^ (r >>> 7), r | 61)
    return ((r ^ (r >>> 14)) >>> 0) / 4294967296
  }
}

function syntheticBatch(rand: () => number, n: number, shape: [number, number, number]) {
  const [h, w, c] = shape
  const data = new Float32Array(n * h * w * c)
  for (let i = 0; i < data.length; i++) data[i] = rand() * 2 - 1
  return tf.tensor4d(data, [n, h, w, c])
}

function fileBatch(
  raw: Buffer,
  k: number,
  n: number,
  shape: [number, number, number],
): tf.Tensor4D {
  const [h, w, c] = shape
  const sampleFloats = h * w * c
  const total = Math.floor(raw.length / (sampleFloats * 4))
  if (total < 1) {
    throw new Error(`data file holds no complete ${h}x${w}x${c} sample`)
  }
  const data = new Float32Array(n * sampleFloats)
  for (let i = 0; i < n; i++) {
    const sample = (k * n + i) % total
    const base = sample * sampleFloats * 4
    for (let j = 0; j < sampleFloats; j++) {
      data[i * sampleFloats + j] = raw.readFloatLE(base + 4 * j)
    }
  }
  return tf.tensor4d(data, [n, h, w, c])
}

export async function resolveModel(name: string): Promise<PreparedModel> {
  if (name.endsWith('.json')) {
    const model = await loadModelFromPath(name)
    return prepareLoadedModel(path.basename(path.dirname(name)) || name, model)
  }
  return buildRegistryModel(name)
}

export async function runExport(opts: ExportOptions): Promise<ExportManifest> {
  const batchSize = opts.batchSize ?? 8
  const seed = opts.seed ?? 42
  if (opts.batches < 1) throw new RangeError(`batches must be >= 1, got ${opts.batches}`)
  const prepared = await resolveModel(opts.model)
  fs.mkdirSync(opts.out, { recursive: true })

  const layers: ManifestLayer[] = prepared.taps.map(tap => ({
    layer_id: tap.layerId,
    channels: tap.channels,
    height: tap.height,
    width: tap.width,
    capture_point: tap.capturePoint,
    required_batches: requiredBatches(tap.channels, tap.height, tap.width, batchSize),
    batches_written: opts.batches,
  }))
  for (const layer of layers) {
    if (opts.batches < layer.required_batches) {
      process.stderr.write(
        `warning: layer ${layer.layer_id} wants ${layer.required_batches} ` +
          `batches of ${batchSize} for a sufficient sample, writing ${opts.batches}\n`,
      )
    }
  }

  const rand = mulberry32(seed)
  const raw = opts.data ? fs.readFileSync(opts.data) : null
  for (let k = 0; k < opts.batches; k++) {
    const input = raw
      ? fileBatch(raw, k, batchSize, prepared.inputShape)
      : syntheticBatch(rand, batchSize, prepared.inputShape)
    const outputs = prepared.tapModel.predict(input) as tf.Tensor | tf.Tensor[]
    const tensors = Array.isArray(outputs) ? outputs : [outputs]
    for (let li = 0; li < tensors.length; li++) {
      const t = tensors[li]
      const [n, h, w, c] = t.shape as [number, number, number, number]
      const data = (await t.data()) as Float32Array
      const buf = encodeActivation({ layerId: layers[li].layer_id, n, h, w, c }, data)
      fs.writeFileSync(path.join(opts.out, captureFilename(layers[li].layer_id, k)), buf)
      t.dispose()
    }
    input.dispose()
  }

  const manifest: ExportManifest = {
    model: prepared.name,
    dataset: opts.data ? path.basename(opts.data) : `synthetic(seed=${seed})`,
    batch_size: batchSize,
    batches: opts.batches,
    layers,
  }
  fs.writeFileSync(path.join(opts.out, 'manifest.json'), JSON.stringify(manifest, null, 1))
  fs.writeFileSync(
    path.join(opts.out, 'arch.json'),
    JSON.stringify(prepared.archConfig, null, 1),
  )
  return manifest
}
