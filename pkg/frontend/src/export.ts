/**
 * Capture + export: hook a pipeline's cross-attention, run sampling, and
 * serialize the captured maps as a GAMD dump with JSON sidecar.
 */

import type {
  AttentionDump, GroundTruthRegion, LayerInfo, TokenMeta,
} from './gamd.js'
import { writeDump } from './gamd.js'
import type { RunOptions, ToyLatentPipeline } from './pipeline.js'
import { UnsupportedPipelineError } from './pipeline.js'
import { tokenizeCaption } from './tokens.js'

export interface ExportOptions extends Omit<RunOptions, 'tokenTexts'> {
  caption: string
  groundTruth?: GroundTruthRegion | null
  out: string
}

interface Captured {
  timestep: number
  layerId: number
  height: number
  width: number
  probabilities: Float64Array
}

/** Anything exposing the interception surface the exporter needs. */
export interface InterceptablePipeline {
  readonly interceptable: boolean
  readonly config: ToyLatentPipeline['config']
  setAttentionInterceptor: ToyLatentPipeline['setAttentionInterceptor']
  run: ToyLatentPipeline['run']
}

export function exportRun (
  pipeline: InterceptablePipeline,
  opts: ExportOptions,
): AttentionDump {
  if (!pipeline.interceptable || typeof pipeline.setAttentionInterceptor !== 'function') {
    throw new UnsupportedPipelineError(
      'pipeline does not expose interceptable cross-attention',
    )
  }
  const nMax = pipeline.config.nTokens
  const tokens: TokenMeta[] = tokenizeCaption(opts.caption, nMax)

  const captured: Captured[] = []
  pipeline.setAttentionInterceptor((_step, timestep, layerId, height, width, p) => {
    captured.push({ timestep, layerId, height, width, probabilities: p })
  })
  try {
    pipeline.run({ ...opts, tokenTexts: tokens.map((t) => t.text) })
  } finally {
    pipeline.setAttentionInterceptor(null)
  }
  if (captured.length === 0) {
    throw new UnsupportedPipelineError('pipeline run produced no attention captures')
  }

  // reconstruct axes from the capture stream
  const timesteps = [...new Set(captured.map((c) => c.timestep))].sort((a, b) => b - a)
  const layerIds = [...new Set(captured.map((c) => c.layerId))].sort((a, b) => a - b)
  const layers: LayerInfo[] = layerIds.map((id) => {
    const c = captured.find((x) => x.layerId === id)!
    return {
      layerId: id,
      height: c.height,
      width: c.width,
      resolutionLevel: String(c.width),
    }
  })

  const values = layers.map(
    (l) => new Float32Array(timesteps.length * nMax * l.height * l.width),
  )
  for (const c of captured) {
    const li = layerIds.indexOf(c.layerId)
    const ti = timesteps.indexOf(c.timestep)
    const n = nMax * c.height * c.width
    values[li].set(c.probabilities, ti * n)
  }

  const dump: AttentionDump = {
    timesteps,
    layers,
    nTokens: nMax,
    values,
    batchSize: 1,
    meta: {
      mode: opts.mode,
      steps: opts.steps,
      guidance_scale: opts.guidanceScale,
      seed: opts.seed ?? 0,
      exporter: 'gamd-bridge',
    },
  }
  writeDump(dump, [tokens], [opts.groundTruth ?? null], opts.out)
  return dump
}
