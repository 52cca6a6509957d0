/**
 * GAMD attention-dump format: binary writer/reader/validator.
 *
 * Layout (little-endian):
 *
 *   magic      4 bytes  "GAMD"
 *   version    u32      1
 *   B          u32      batch size
 *   T          u32      timestep count
 *   timesteps  T * i32  strictly decreasing
 *   L          u32      layer count
 *   per layer: layer_id i32, H u32, W u32, tag u16-length + utf-8
 *   N_max      u32      token axis length
 *   dtype      u8       0 = float32
 *   values     B*T*L blocks of N_max*H*W f32,
 *              nested [sample][timestep][layer][token][row][col]
 *
 * Token metadata and ground-truth boxes travel in a JSON sidecar at
 * `<path>.json`. Every pixel's token vector must sum to 1 within 1e-3.
 */

import { readFileSync, renameSync, writeFileSync } from 'node:fs'

export const MAGIC = 'GAMD'
export const VERSION = 1
export const DTYPE_F32 = 0
export const SOFTMAX_TOL = 1e-3

export interface LayerInfo {
  layerId: number
  height: number
  width: number
  resolutionLevel: string
}

export interface TokenMeta {
  text: string
  is_start?: boolean
  is_end?: boolean
  is_pad?: boolean
  is_lexical?: boolean
  is_disease?: boolean
}

export interface GroundTruthRegion {
  boxes: Array<[number, number, number, number]>
  category: string
}

export interface AttentionDump {
  timesteps: number[]
  layers: LayerInfo[]
  nTokens: number
  /** one Float32Array per layer, flat over [sample][timestep][token][row][col] */
  values: Float32Array[]
  batchSize: number
  meta: Record<string, unknown>
}

export class DumpValidationError extends Error {}
export class DumpFormatError extends Error {}

export function validateDump (dump: AttentionDump): void {
  const ts = dump.timesteps
  if (ts.length === 0) throw new DumpValidationError('timestep axis is empty')
  for (let i = 1; i < ts.length; i++) {
    if (ts[i - 1] <= ts[i]) {
      throw new DumpValidationError('timesteps not strictly decreasing')
    }
  }
  const ids = new Set(dump.layers.map((l) => l.layerId))
  if (ids.size !== dump.layers.length) {
    throw new DumpValidationError('layer_ids not unique')
  }
  if (dump.layers.length !== dump.values.length) {
    throw new DumpValidationError('layer table and value blocks disagree')
  }
  if (dump.nTokens < 1) throw new DumpValidationError('token axis is empty')
  for (let li = 0; li < dump.layers.length; li++) {
    const info = dump.layers[li]
    if (info.height < 1 || info.width < 1) {
      throw new DumpValidationError(`layer ${info.layerId}: empty grid`)
    }
    const hw = info.height * info.width
    const expect = dump.batchSize * ts.length * dump.nTokens * hw
    const v = dump.values[li]
    if (v.length !== expect) {
      throw new DumpValidationError(
        `layer ${info.layerId}: ${v.length} values, expected ${expect}`,
      )
    }
    // per-pixel softmax sums over the token axis
    const slices = dump.batchSize * ts.length
    for (let s = 0; s < slices; s++) {
      const base = s * dump.nTokens * hw
      for (let p = 0; p < hw; p++) {
        let sum = 0
        for (let n = 0; n < dump.nTokens; n++) {
          const x = v[base + n * hw + p]
          if (!Number.isFinite(x)) {
            throw new DumpValidationError(`layer ${info.layerId}: non-finite values`)
          }
          if (x < 0) {
            throw new DumpValidationError(`layer ${info.layerId}: negative values`)
          }
          sum += x
        }
        if (Math.abs(sum - 1.0) > SOFTMAX_TOL) {
          throw new DumpValidationError(
            `layer ${info.layerId}: token softmax sum off by ` +
            `${Math.abs(sum - 1.0).toExponential(2)}`,
          )
        }
      }
    }
  }
}

function validateTokens (tokens: TokenMeta[]): void {
  const starts = tokens.flatMap((t, i) => (t.is_start ? [i] : []))
  const ends = tokens.flatMap((t, i) => (t.is_end ? [i] : []))
  if (starts.length !== 1 || starts[0] !== 0) {
    throw new DumpValidationError('exactly one start token at index 0 required')
  }
  if (ends.length !== 1) {
    throw new DumpValidationError('exactly one end token required')
  }
  const end = ends[0]
  tokens.forEach((t, i) => {
    if (t.is_pad && i <= end) throw new DumpValidationError('pad token before end token')
    if (!t.is_pad && i > end) throw new DumpValidationError('non-pad token after end token')
    if ((t.is_start || t.is_end || t.is_pad) && (t.is_lexical || t.is_disease)) {
      throw new DumpValidationError(`token ${i}: special token flagged lexical/disease`)
    }
  })
}

export function encodeDump (dump: AttentionDump): Buffer {
  validateDump(dump)
  const parts: Buffer[] = []
  const u32 = (x: number) => {
    const b = Buffer.alloc(4)
    b.writeUInt32LE(x)
    return b
  }
  const i32 = (x: number) => {
    const b = Buffer.alloc(4)
    b.writeInt32LE(x)
    return b
  }
  parts.push(Buffer.from(MAGIC, 'ascii'), u32(VERSION), u32(dump.batchSize))
  parts.push(u32(dump.timesteps.length))
  for (const t of dump.timesteps) parts.push(i32(t))
  parts.push(u32(dump.layers.length))
  for (const info of dump.layers) {
    parts.push(i32(info.layerId), u32(info.height), u32(info.width))
    const tag = Buffer.from(info.resolutionLevel, 'utf-8')
    const len = Buffer.alloc(2)
    len.writeUInt16LE(tag.length)
    parts.push(len, tag)
  }
  parts.push(u32(dump.nTokens), Buffer.from([DTYPE_F32]))

  // value blocks interleave layers inside each (sample, timestep) pair
  for (let bi = 0; bi < dump.batchSize; bi++) {
    for (let ti = 0; ti < dump.timesteps.length; ti++) {
      for (let li = 0; li < dump.layers.length; li++) {
        const info = dump.layers[li]
        const n = dump.nTokens * info.height * info.width
        const offset = (bi * dump.timesteps.length + ti) * n
        const slice = dump.values[li].subarray(offset, offset + n)
        const block = Buffer.alloc(4 * n)
        for (let i = 0; i < n; i++) block.writeFloatLE(slice[i], 4 * i)
        parts.push(block)
      }
    }
  }
  return Buffer.concat(parts)
}

export interface SidecarSample {
  tokens: TokenMeta[]
  ground_truth: GroundTruthRegion | null
}

export function writeDump (
  dump: AttentionDump,
  tokens: TokenMeta[][],
  gt: Array<GroundTruthRegion | null> | null,
  path: string,
): void {
  if (tokens.length !== dump.batchSize) {
    throw new DumpValidationError('token metadata count != batch size')
  }
  for (const seq of tokens) {
    if (seq.length !== dump.nTokens) {
      throw new DumpValidationError('token list length != N_max')
    }
    validateTokens(seq)
  }
  if (gt !== null && gt.length !== dump.batchSize) {
    throw new DumpValidationError('ground-truth count != batch size')
  }
  const payload = encodeDump(dump)
  const tmp = `${path}.tmp`
  writeFileSync(tmp, payload)
  renameSync(tmp, path)

  const doc = {
    samples: tokens.map((seq, bi) => ({
      tokens: seq.map((t) => ({
        text: t.text,
        is_start: t.is_start ?? false,
        is_end: t.is_end ?? false,
        is_pad: t.is_pad ?? false,
        is_lexical: t.is_lexical ?? false,
        is_disease: t.is_disease ?? false,
      })),
      ground_truth: gt === null || gt[bi] === null
        ? null
        : { boxes: gt[bi]!.boxes.map((b) => [...b]), category: gt[bi]!.category },
    })),
    meta: dump.meta,
  }
  const sideTmp = `${path}.json.tmp`
  writeFileSync(sideTmp, JSON.stringify(doc, null, 1))
  renameSync(sideTmp, `${path}.json`)
}

export function readDump (path: string): {
  dump: AttentionDump
  tokens: TokenMeta[][]
  gt: Array<GroundTruthRegion | null>
} {
  const raw = readFileSync(path)
  let off = 0
  const need = (n: number): number => {
    if (off + n > raw.length) {
      throw new DumpFormatError(
        `truncated dump: need ${off + n} bytes, file has ${raw.length}`,
      )
    }
    const at = off
    off += n
    return at
  }

  const magicAt = need(4)
  if (raw.subarray(magicAt, magicAt + 4).toString('ascii') !== MAGIC) {
    throw new DumpFormatError('bad magic bytes (not a GAMD file)')
  }
  const version = raw.readUInt32LE(need(4))
  if (version !== VERSION) {
    throw new DumpFormatError(`unsupported GAMD version ${version}`)
  }
  const batchSize = raw.readUInt32LE(need(4))
  const tLen = raw.readUInt32LE(need(4))
  const timesteps: number[] = []
  for (let i = 0; i < tLen; i++) timesteps.push(raw.readInt32LE(need(4)))
  const lLen = raw.readUInt32LE(need(4))
  const layers: LayerInfo[] = []
  for (let i = 0; i < lLen; i++) {
    const layerId = raw.readInt32LE(need(4))
    const height = raw.readUInt32LE(need(4))
    const width = raw.readUInt32LE(need(4))
    const tagLen = raw.readUInt16LE(need(2))
    const at = need(tagLen)
    layers.push({
      layerId,
      height,
      width,
      resolutionLevel: raw.subarray(at, at + tagLen).toString('utf-8'),
    })
  }
  const nTokens = raw.readUInt32LE(need(4))
  const dtype = raw.readUInt8(need(1))
  if (dtype !== DTYPE_F32) throw new DumpFormatError(`unknown dtype code ${dtype}`)

  const values = layers.map(
    (l) => new Float32Array(batchSize * tLen * nTokens * l.height * l.width),
  )
  for (let bi = 0; bi < batchSize; bi++) {
    for (let ti = 0; ti < tLen; ti++) {
      for (let li = 0; li < layers.length; li++) {
        const info = layers[li]
        const n = nTokens * info.height * info.width
        const at = need(4 * n)
        const dst = values[li]
        const base = (bi * tLen + ti) * n
        for (let i = 0; i < n; i++) dst[base + i] = raw.readFloatLE(at + 4 * i)
      }
    }
  }
  if (off !== raw.length) {
    throw new DumpFormatError(`trailing bytes: ${raw.length - off} past payload`)
  }

  const dump: AttentionDump = {
    timesteps, layers, nTokens, values, batchSize, meta: {},
  }
  let tokens: TokenMeta[][] = []
  let gt: Array<GroundTruthRegion | null> = new Array(batchSize).fill(null)
  try {
    const doc = JSON.parse(readFileSync(`${path}.json`, 'utf-8'))
    dump.meta = doc.meta ?? {}
    tokens = doc.samples.map((s: SidecarSample) => s.tokens)
    gt = doc.samples.map((s: SidecarSample) =>
      s.ground_truth === null
        ? null
        : {
            boxes: s.ground_truth.boxes.map(
              (b) => [...b] as [number, number, number, number],
            ),
            category: s.ground_truth.category,
          })
    if (tokens.length !== batchSize) {
      throw new DumpValidationError('sidecar sample count != batch size')
    }
    tokens.forEach(validateTokens)
  } catch (e) {
    if (!(e instanceof Error && 'code' in e && e.code === 'ENOENT')) throw e
  }
  validateDump(dump)
  return { dump, tokens, gt }
}
