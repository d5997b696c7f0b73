#!/usr/bin/env node
/** CLI: export --model NAME --batches K --out DIR [--data FILE] [--batch-size N] [--seed S] */

import { runExport } from './export'
import { UnsupportedArchitectureError } from './models'

function usage(): never {
  process.stderr.write(
    'usage: cli.js export --model NAME|model.json --batches K --out DIR ' +
      '[--data FILE] [--batch-size N] [--seed S]\n',
  )
  process.exit(2)
}

function parseArgs(argv: string[]) {
  if (argv[0] !== 'export') usage()
  const opts: Record<string, string> = {}
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i]
    const val = argv[i + 1]
    if (!key.startsWith('--') || val === undefined) usage()
    opts[key.slice(2)] = val
  }
  if (!opts.model || !opts.out || !opts.batches) usage()
  return {
    model: opts.model,
    out: opts.out,
    batches: parseInt(opts.batches, 10),
    batchSize: opts['batch-size'] ? parseInt(opts['batch-size'], 10) : undefined,
    data: opts.data,
    seed: opts.seed ? parseInt(opts.seed, 10) : undefined,
  }
}

async function main(): Promise<number> {
  const opts = parseArgs(process.argv.slice(2))
  try {
    const manifest = await runExport(opts)
    const files = manifest.layers.length * manifest.batches
    process.stdout.write(
      `exported ${files} activation files from ${manifest.model} -> ${opts.out}\n`,
    )
    return 0
  } catch (err) {
    if (err instanceof UnsupportedArchitectureError) {
      process.stderr.write(`unsupported architecture: ${err.message}\n`)
      return 3
    }
    process.stderr.write(`error: ${(err as Error).message}\n`)
    return 3
  }
}

main().then(code => process.exit(code))
