/**
 * Minimal latent-diffusion pipeline stand-in with interceptable
 * cross-attention.
 *
 * The denoiser here is a deterministic seeded surrogate (no learned
 * weights): queries depend on the latent and position, keys on the token
 * embeddings, and the per-pixel softmax over tokens is what gets captured.
 * The bridge's job is capture + serialization, not science, so a surrogate
 * exercising the exact same interception surface as a real UNet hook is
 * sufficient for testing the export path.
 */

export const MODES = ['text', 'cfg', 'gt1_cfg', 'gt_cfg'] as const
export type SamplingMode = (typeof MODES)[number]

export class UnsupportedPipelineError extends Error {}

/** Called once per (step, layer) with the conditional-pass attention. */
export type AttentionInterceptor = (
  stepIndex: number,
  timestep: number,
  layerId: number,
  height: number,
  width: number,
  /** row-major [token][row][col], each pixel's token vector sums to 1 */
  probabilities: Float64Array,
) => void

/** mulberry32: small deterministic PRNG, good enough for a surrogate. */
function rng (seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

export interface PipelineConfig {
  latentSide: number
  /** cross-attention grid sides, outermost first */
  attentionSides: number[]
  nTokens: number
  tTrain: number
  seed: number
}

export const DEFAULT_CONFIG: PipelineConfig = {
  latentSide: 8,
  attentionSides: [8, 4],
  nTokens: 8,
  tTrain: 100,
  seed: 0,
}

export interface RunOptions {
  tokenTexts: string[]
  mode: SamplingMode
  steps: number
  guidanceScale: number
  /** latentSide x latentSide ground-truth image, required for gt modes */
  image?: number[][]
  seed?: number
}

export class ToyLatentPipeline {
  readonly config: PipelineConfig
  private interceptor: AttentionInterceptor | null = null

  constructor (config: Partial<PipelineConfig> = {}) {
    this.config = { ...DEFAULT_CONFIG, ...config }
  }

  get interceptable (): boolean {
    return true
  }

  setAttentionInterceptor (fn: AttentionInterceptor | null): void {
    this.interceptor = fn
  }

  /** Uniform subsample of the training schedule, decreasing. */
  inferenceSteps (steps: number): number[] {
    const { tTrain } = this.config
    if (steps < 1 || steps > tTrain) {
      throw new RangeError(`steps=${steps} outside [1, ${tTrain}]`)
    }
    const out = new Set<number>()
    for (let i = 0; i < steps; i++) {
      const t = steps === 1 ? tTrain - 1 : (tTrain - 1) * (1 - i / (steps - 1))
      out.add(Math.round(t))
    }
    return [...out].sort((a, b) => b - a)
  }

  /** Deterministic per-token embedding component. */
  private tokenFeature (tokenIndex: number, dim: number): number {
    const r = rng(this.config.seed * 7919 + tokenIndex * 131 + dim)
    return r() * 2 - 1
  }

  private attentionFor (
    latent: Float64Array,
    timestep: number,
    side: number,
    layerSeed: number,
  ): Float64Array {
    const { nTokens, latentSide } = this.config
    const hw = side * side
    const out = new Float64Array(nTokens * hw)
    const dims = 4
    for (let p = 0; p < hw; p++) {
      const row = Math.floor(p / side)
      const col = p % side
      // pool the latent patch under this attention cell
      const f = latentSide / side
      let pooled = 0
      for (let dr = 0; dr < f; dr++) {
        for (let dc = 0; dc < f; dc++) {
          pooled += latent[(row * f + dr) * latentSide + (col * f + dc)]
        }
      }
      pooled /= f * f
      const logits = new Float64Array(nTokens)
      for (let n = 0; n < nTokens; n++) {
        let dot = 0
        for (let d = 0; d < dims; d++) {
          const q =
            Math.sin((layerSeed + 1) * (d + 1) * (pooled + row / side - col / side)) +
            0.25 * Math.cos((timestep / this.config.tTrain) * (d + 1))
          dot += q * this.tokenFeature(n, d)
        }
        logits[n] = dot
      }
      let max = -Infinity
      for (const l of logits) max = Math.max(max, l)
      let sum = 0
      for (let n = 0; n < nTokens; n++) {
        logits[n] = Math.exp(logits[n] - max)
        sum += logits[n]
      }
      for (let n = 0; n < nTokens; n++) out[n * hw + p] = logits[n] / sum
    }
    return out
  }

  /**
   * Run sampling; the interceptor sees the conditional pass's attention for
   * every (step, layer). Returns the final latent.
   */
  run (opts: RunOptions): Float64Array {
    if (!MODES.includes(opts.mode)) {
      throw new RangeError(`unknown sampling mode '${opts.mode}'`)
    }
    if (opts.guidanceScale < 0) throw new RangeError('guidance scale must be >= 0')
    const gtModes = opts.mode === 'gt1_cfg' || opts.mode === 'gt_cfg'
    if (gtModes && !opts.image) {
      throw new RangeError(`mode '${opts.mode}' requires a ground-truth image`)
    }
    const { latentSide, tTrain } = this.config
    const tList = this.inferenceSteps(opts.steps)
    const noise = rng((opts.seed ?? 0) * 2654435761 + this.config.seed)
    const gauss = (): number => {
      // Box-Muller
      const u = Math.max(noise(), 1e-12)
      return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * noise())
    }
    const flatGt = opts.image ? Float64Array.from(opts.image.flat()) : null

    const noisedGt = (t: number): Float64Array => {
      const a = 1 - t / tTrain // surrogate alpha-bar, decreasing in t
      const x = new Float64Array(latentSide * latentSide)
      for (let i = 0; i < x.length; i++) {
        x[i] = Math.sqrt(a) * flatGt![i] + Math.sqrt(1 - a) * gauss()
      }
      return x
    }

    let latent: Float64Array
    if (opts.mode === 'gt1_cfg') {
      latent = noisedGt(tList[0])
    } else if (opts.mode === 'gt_cfg') {
      latent = new Float64Array(latentSide * latentSide)
    } else {
      latent = new Float64Array(latentSide * latentSide)
      for (let i = 0; i < latent.length; i++) latent[i] = gauss()
    }

    tList.forEach((t, stepIndex) => {
      if (opts.mode === 'gt_cfg') latent = noisedGt(t)
      this.config.attentionSides.forEach((side, layerId) => {
        const probs = this.attentionFor(latent, t, side, layerId)
        this.interceptor?.(stepIndex, t, layerId, side, side, probs)
      })
      // surrogate denoising update: contract toward the (optional) target
      const target = flatGt
      for (let i = 0; i < latent.length; i++) {
        const pull = target ? target[i] : 0
        latent[i] = 0.9 * latent[i] + 0.1 * pull
      }
    })
    return latent
  }
}
