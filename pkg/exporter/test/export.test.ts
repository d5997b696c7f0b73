import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'

import * as tf from '@tensorflow/tfjs'
import { afterAll, describe, expect, it } from 'vitest'

import { decodeActivation, requiredBatches } from '../src/actformat'
import { runExport } from '../src/export'
import {
  UnsupportedArchitectureError,
  buildRegistryModel,
  loadModelFromPath,
  prepareLoadedModel,
  saveModelToDir,
} from '../src/models'

const tmpDirs: string[] = []

function tmpDir(label: string): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), `exporter-${label}-`))
  tmpDirs.push(dir)
  return dir
}

afterAll(() => {
  for (const dir of tmpDirs) fs.rmSync(dir, { recursive: true, force: true })
})

describe('tiny 2-conv export', () => {
  it('writes matching files, manifest, and config', async () => {
    const out = tmpDir('tiny2')
    const manifest = await runExport({ model: 'tiny2', out, batches: 2, batchSize: 8 })

    expect(manifest.layers.length).toBe(2)
    expect(manifest.layers[0]).toMatchObject({ channels: 8, height: 16, width: 16 })
    expect(manifest.layers[1]).toMatchObject({ channels: 16, height: 8, width: 8 })

    for (const layer of manifest.layers) {
      expect(layer.required_batches).toBe(
        requiredBatches(layer.channels, layer.height, layer.width, manifest.batch_size),
      )
      for (let k = 0; k < manifest.batches; k++) {
        const file = path.join(out, `layer${layer.layer_id}_batch${k}.act`)
        const { header, data } = decodeActivation(fs.readFileSync(file))
        expect(header).toEqual({
          layerId: layer.layer_id,
          n: manifest.batch_size,
          h: layer.height,
          w: layer.width,
          c: layer.channels,
        })
        expect(data.every(v => Number.isFinite(v))).toBe(true)
      }
    }

    const arch = JSON.parse(fs.readFileSync(path.join(out, 'arch.json'), 'utf-8'))
    expect(arch).toEqual({ input: [16, 16, 1], layers: [8, 'M', 16], classes: 4 })
  })

  it('is deterministic for a fixed seed', async () => {
    const a = tmpDir('det-a')
    const b = tmpDir('det-b')
    await runExport({ model: 'tiny2', out: a, batches: 1, batchSize: 4, seed: 5 })
    await runExport({ model: 'tiny2', out: b, batches: 1, batchSize: 4, seed: 5 })
    const fa = fs.readFileSync(path.join(a, 'layer0_batch0.act'))
    const fb = fs.readFileSync(path.join(b, 'layer0_batch0.act'))
    expect(fa.equals(fb)).toBe(true)
  })

  it('reads batches from a raw float32 data file', async () => {
    const out = tmpDir('datafile')
    const samples = 3
    const floats = new Float32Array(samples * 16 * 16 * 1).map((_, i) => (i % 7) / 7)
    const dataPath = path.join(out, 'inputs.bin')
    fs.writeFileSync(dataPath, Buffer.from(floats.buffer))
    const manifest = await runExport({
      model: 'tiny2',
      out,
      batches: 1,
      batchSize: 2,
      data: dataPath,
    })
    expect(manifest.dataset).toBe('inputs.bin')
    expect(fs.existsSync(path.join(out, 'layer1_batch0.act'))).toBe(true)
  })
})

describe('saved model round trip', () => {
  it('exports from a model.json written to disk', async () => {
    const dir = tmpDir('saved')
    const built = buildRegistryModel('tiny2', 3)
    await saveModelToDir(built.tapModel, path.join(dir, 'model'))
    const loaded = await loadModelFromPath(path.join(dir, 'model', 'model.json'))
    const prepared = prepareLoadedModel('reloaded', loaded)
    expect(prepared.taps.length).toBe(2)
    const out = path.join(dir, 'out')
    const manifest = await runExport({
      model: path.join(dir, 'model', 'model.json'),
      out,
      batches: 1,
      batchSize: 2,
    })
    expect(manifest.layers.length).toBe(2)
    expect(fs.existsSync(path.join(out, 'layer1_batch0.act'))).toBe(true)
  })
})

describe('vgg16-class model', () => {
  it('captures the expected first-layer shape on 32x32 inputs', async () => {
    const out = tmpDir('vgg16')
    const manifest = await runExport({ model: 'vgg16', out, batches: 1, batchSize: 2 })
    expect(manifest.layers.length).toBe(13)
    const first = decodeActivation(fs.readFileSync(path.join(out, 'layer0_batch0.act')))
    expect(first.header).toEqual({ layerId: 0, n: 2, h: 32, w: 32, c: 64 })
  }, 120_000)
})

describe('unsupported architectures', () => {
  it('rejects shortcut connections explicitly', () => {
    const input = tf.input({ shape: [8, 8, 1] })
    const conv = tf.layers
      .conv2d({ filters: 1, kernelSize: 3, padding: 'same' })
      .apply(input) as tf.SymbolicTensor
    const added = tf.layers.add().apply([input, conv]) as tf.SymbolicTensor
    const model = tf.model({ inputs: input, outputs: added })
    expect(() => prepareLoadedModel('res', model)).toThrow(UnsupportedArchitectureError)
  })

  it('rejects unknown registry names', () => {
    expect(() => buildRegistryModel('resnet50')).toThrow(UnsupportedArchitectureError)
  })
})
