/**
 * Canonical cross-implementation GAMD fixture.
 *
 * Mirrors tests/golden_fixture.py in the main package; every value is a
 * small multiple of 1/8 (exact in float32), so any correct writer produces
 * byte-identical output:
 *
 * - B=1 sample, timesteps [10, 5], N_max=4, dtype f32
 * - layers: id 0 at 4x4 (tag "4"), id 1 at 2x2 (tag "2")
 * - tokens: [start] / "patchy" (lexical+disease) / "lung" (lexical) / [end]
 * - ground truth: one box (0, 1, 2, 2), category "golden"
 * - values: pixel (r, c) of timestep index ti holds the token vector
 *   [1/8, 2/8, 2/8, 3/8] left-rotated by (r + c + ti) mod 4
 * - sidecar meta: {"fixture": "golden", "rev": 1}
 */

import type {
  AttentionDump, GroundTruthRegion, TokenMeta,
} from './gamd.js'
import { writeDump } from './gamd.js'

const BASE = [1 / 8, 2 / 8, 2 / 8, 3 / 8]

export function goldenTokens (): TokenMeta[] {
  return [
    { text: '[start]', is_start: true },
    { text: 'patchy', is_lexical: true, is_disease: true },
    { text: 'lung', is_lexical: true },
    { text: '[end]', is_end: true },
  ]
}

export function goldenGroundTruth (): GroundTruthRegion {
  return { boxes: [[0, 1, 2, 2]], category: 'golden' }
}

export function goldenDump (): AttentionDump {
  const sides = [4, 2]
  const values = sides.map((side) => {
    const v = new Float32Array(2 * 4 * side * side)
    for (let ti = 0; ti < 2; ti++) {
      for (let r = 0; r < side; r++) {
        for (let c = 0; c < side; c++) {
          const rot = (r + c + ti) % 4
          for (let n = 0; n < 4; n++) {
            v[((ti * 4 + n) * side + r) * side + c] = BASE[(n + rot) % 4]
          }
        }
      }
    }
    return v
  })
  return {
    timesteps: [10, 5],
    layers: [
      { layerId: 0, height: 4, width: 4, resolutionLevel: '4' },
      { layerId: 1, height: 2, width: 2, resolutionLevel: '2' },
    ],
    nTokens: 4,
    values,
    batchSize: 1,
    meta: { fixture: 'golden', rev: 1 },
  }
}

export function writeGolden (path: string): void {
  writeDump(goldenDump(), [goldenTokens()], [goldenGroundTruth()], path)
}
