/**
 * Model construction and loading.
 *
 * Built-in models are linear conv stacks (3x3 'same' convs with batch norm
 * and ReLU, 2x2 max-pools, one dense classifier) so each conv layer has a
 * well-defined post-BN / pre-ReLU tap.  Saved tfjs LayersModels can be
 * loaded from a model.json path; anything that is not a plain chain
 * (shortcuts, merges) is rejected.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

export class UnsupportedArchitectureError extends Error {}

export type Token = number | 'M'

export interface ArchConfigJson {
  input: [number, number, number] // H, W, C
  layers: Token[]
  classes: number
}

export interface TapSpec {
  layerId: number
  channels: number
  height: number
  width: number
  capturePoint: 'post-bn' | 'pre-bn'
}

export interface PreparedModel {
  name: string
  tapModel: tf.LayersModel
  taps: TapSpec[]
  inputShape: [number, number, number]
  archConfig: ArchConfigJson
}

interface Registered {
  tokens: Token[]
  input: [number, number, number]
  classes: number
}

export const REGISTRY: Record<string, Registered> = {
  tiny2: { tokens: [8, 'M', 16], input: [16, 16, 1], classes: 4 },
  conv3: { tokens: [32, 'M', 32, 'M', 32], input: [32, 32, 3], classes: 10 },
  vgg16: {
    tokens: [64, 64, 'M', 128, 128, 'M', 256, 256, 256, 'M', 512, 512, 512, 'M', 512, 512, 512],
    input: [32, 32, 3],
    classes: 10,
  },
}

export function buildRegistryModel(name: string, seed = 1): PreparedModel {
  const spec = REGISTRY[name]
  if (!spec) {
    throw new UnsupportedArchitectureError(
      `unknown model "${name}" (have: ${Object.keys(REGISTRY).join(', ')})`,
    )
  }
  const input = tf.input({ shape: spec.input })
  let x: tf.SymbolicTensor = input
  const tapTensors: tf.SymbolicTensor[] = []
  let layerId = 0
  for (const token of spec.tokens) {
    if (token === 'M') {
      x = tf.layers.maxPooling2d({ poolSize: 2, strides: 2 }).apply(x) as tf.SymbolicTensor
      continue
    }
    x = tf.layers
      .conv2d({
        filters: token,
        kernelSize: 3,
        padding: 'same',
        activation: 'linear',
        kernelInitializer: tf.initializers.heNormal({ seed: seed + layerId }),
      })
      .apply(x) as tf.SymbolicTensor
    x = tf.layers.batchNormalization({}).apply(x) as tf.SymbolicTensor
    tapTensors.push(x) // post-BN, pre-ReLU
    x = tf.layers.reLU().apply(x) as tf.SymbolicTensor
    layerId += 1
  }
  x = tf.layers.flatten().apply(x) as tf.SymbolicTensor
  x = tf.layers
    .dense({
      units: spec.classes,
      kernelInitializer: tf.initializers.heNormal({ seed: seed + 100 }),
    })
    .apply(x) as tf.SymbolicTensor
  tf.model({ inputs: input, outputs: x }) // full model; built for completeness
  const tapModel = tf.model({ inputs: input, outputs: tapTensors })
  return {
    name,
    tapModel,
    taps: tapTensors.map((t, i) => symbolicTap(t, i)),
    inputShape: spec.input,
    archConfig: { input: spec.input, layers: spec.tokens, classes: spec.classes },
  }
}

function symbolicTap(t: tf.SymbolicTensor, layerId: number): TapSpec {
  const [, h, w, c] = t.shape
  return {
    layerId,
    channels: c as number,
    height: h as number,
    width: w as number,
    capturePoint: 'post-bn',
  }
}

const CHAIN_LAYERS = new Set([
  'InputLayer',
  'Conv2D',
  'BatchNormalization',
  'ReLU',
  'Activation',
  'MaxPooling2D',
  'AveragePooling2D',
  'Flatten',
  'Dense',
  'Dropout',
])

/**
 * Wrap a loaded LayersModel: validate it is a plain chain and collect one
 * tap per conv layer (the batch-norm output when one directly follows,
 * otherwise the conv output itself; both are pre-ReLU).
 */
export function prepareLoadedModel(name: string, model: tf.LayersModel): PreparedModel {
  const layers = model.layers
  for (const layer of layers) {
    const cls = layer.getClassName()
    if (!CHAIN_LAYERS.has(cls)) {
      throw new UnsupportedArchitectureError(
        `layer "${layer.name}" (${cls}) is not hookable; shortcut/merge architectures are unsupported`,
      )
    }
    if (layer.inboundNodes.length > 1) {
      throw new UnsupportedArchitectureError(
        `layer "${layer.name}" is reused ${layer.inboundNodes.length} times; not a plain chain`,
      )
    }
  }
  const tapTensors: tf.SymbolicTensor[] = []
  const tokens: Token[] = []
  let classes = 0
  for (let i = 0; i < layers.length; i++) {
    const cls = layers[i].getClassName()
    if (cls === 'Conv2D') {
      const out =
        i + 1 < layers.length && layers[i + 1].getClassName() === 'BatchNormalization'
          ? (layers[i + 1].output as tf.SymbolicTensor)
          : (layers[i].output as tf.SymbolicTensor)
      tapTensors.push(out)
      tokens.push(out.shape[3] as number)
    } else if (cls === 'MaxPooling2D') {
      tokens.push('M')
    } else if (cls === 'Dense') {
      classes = (layers[i].output as tf.SymbolicTensor).shape[1] as number
    }
  }
  if (tapTensors.length === 0) {
    throw new UnsupportedArchitectureError('model has no conv layers to capture')
  }
  const inShape = model.inputs[0].shape.slice(1) as [number, number, number]
  const tapModel = tf.model({ inputs: model.inputs, outputs: tapTensors })
  return {
    name,
    tapModel,
    taps: tapTensors.map((t, i) => symbolicTap(t, i)),
    inputShape: inShape,
    archConfig: { input: inShape, layers: tokens, classes },
  }
}

// ------------------------------------------------------- disk round trips ---

/** Save a LayersModel as model.json + weights.bin under `dir`. */
export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true })
  await model.save({
    save: async artifacts => {
      const weightsName = 'weights.bin'
      const manifest = [
        { paths: [weightsName], weights: artifacts.weightSpecs ?? [] },
      ]
      const topology = {
        modelTopology: artifacts.modelTopology,
        format: 'layers-model',
        generatedBy: 'sigdims-exporter',
        convertedBy: null,
        weightsManifest: manifest,
      }
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(topology))
      fs.writeFileSync(path.join(dir, weightsName), Buffer.from(artifacts.weightData as ArrayBuffer))
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON',
        },
      }
    },
  })
}

/** Load a LayersModel from a model.json path written by `saveModelToDir`. */
export async function loadModelFromPath(modelJsonPath: string): Promise<tf.LayersModel> {
  const dir = path.dirname(modelJsonPath)
  const topology = JSON.parse(fs.readFileSync(modelJsonPath, 'utf-8'))
  return tf.loadLayersModel({
    load: async () => {
      const specs: tf.io.WeightsManifestEntry[] = []
      const buffers: Buffer[] = []
      for (const group of topology.weightsManifest) {
        specs.push(...group.weights)
        for (const p of group.paths) {
          buffers.push(fs.readFileSync(path.join(dir, p)))
        }
      }
      const weightData = Buffer.concat(buffers)
      return {
        modelTopology: topology.modelTopology,
        weightSpecs: specs,
        weightData: weightData.buffer.slice(
          weightData.byteOffset,
          weightData.byteOffset + weightData.byteLength,
        ),
      }
    },
  })
}
