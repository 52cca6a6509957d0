#!/usr/bin/env node
/**
 * gamd-export: run the toy pipeline with attention interception and write a
 * GAMD dump (plus JSON sidecar) for the captured cross-attention maps.
 */

import { readFileSync } from 'node:fs'
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { exportRun } from './export.js'
import { MODES, ToyLatentPipeline, type SamplingMode } from './pipeline.js'

export async function main (argv: string[]): Promise<void> {
  const args = await yargs(argv)
    .scriptName('gamd-export')
    .option('caption', {
      type: 'string', demandOption: true, describe: 'text prompt to condition on',
    })
    .option('image', {
      type: 'string',
      describe: 'JSON file with a 2-D ground-truth image (required for gt modes)',
    })
    .option('mode', {
      choices: MODES, default: 'cfg' as SamplingMode,
      describe: 'sampling regime',
    })
    .option('steps', {
      type: 'number', default: 2, describe: 'inference steps',
    })
    .option('guidance', {
      type: 'number', default: 3.0, describe: 'classifier-free guidance scale',
    })
    .option('seed', { type: 'number', default: 0 })
    .option('out', {
      type: 'string', demandOption: true, describe: 'output .gamd path',
    })
    .strict()
    .parse()

  const image = args.image !== undefined
    ? (JSON.parse(readFileSync(args.image, 'utf-8')) as number[][])
    : undefined

  const pipeline = new ToyLatentPipeline()
  const dump = exportRun(pipeline, {
    caption: args.caption,
    image,
    mode: args.mode,
    steps: args.steps,
    guidanceScale: args.guidance,
    seed: args.seed,
    out: args.out,
  })
  console.log(
    `wrote ${args.out}: B=${dump.batchSize} T=${dump.timesteps.length} ` +
    `L=${dump.layers.length} N=${dump.nTokens}`,
  )
}

const invokedDirectly = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split('/').pop()!)
if (invokedDirectly) {
  main(hideBin(process.argv)).catch((e) => {
    console.error(`gamd-export: ${e instanceof Error ? e.message : e}`)
    process.exit(1)
  })
}
