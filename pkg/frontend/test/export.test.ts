import { execFileSync } from 'node:child_process'
import { existsSync, mkdtempSync, rmSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { dirname, join } from 'node:path'
import { fileURLToPath } from 'node:url'
import { afterAll, describe, expect, it } from 'vitest'

import { encodeDump, readDump } from '../src/gamd.js'
import { exportRun } from '../src/export.js'
import { ToyLatentPipeline, UnsupportedPipelineError } from '../src/pipeline.js'
import { CaptionError, tokenizeCaption } from '../src/tokens.js'

const here = dirname(fileURLToPath(import.meta.url))
const tmp = mkdtempSync(join(tmpdir(), 'gamd-export-'))
afterAll(() => rmSync(tmp, { recursive: true, force: true }))

const GT_IMAGE = Array.from({ length: 8 }, (_, r) =>
  Array.from({ length: 8 }, (_, c) => (r < 4 && c < 4 ? 1 : 0)))

describe('tokenizer', () => {
  it('frames, flags and pads a caption', () => {
    const toks = tokenizeCaption('Patchy opacity in the lung', 8)
    expect(toks).toHaveLength(8)
    expect(toks[0].is_start).toBe(true)
    expect(toks.map((t) => t.text).slice(1, 6))
      .toEqual(['patchy', 'opacity', 'in', 'the', 'lung'])
    expect(toks[1].is_disease).toBe(true)
    expect(toks[3].is_lexical).toBe(false) // "in" is a stopword
    expect(toks[6].is_end).toBe(true)
    expect(toks[7].is_pad).toBe(true)
  })

  it('rejects empty and oversized captions', () => {
    expect(() => tokenizeCaption('  ', 8)).toThrow(CaptionError)
    expect(() => tokenizeCaption('a b c d e f g', 8)).toThrow(CaptionError)
  })
})

describe('pipeline', () => {
  it('subsamples the schedule decreasingly', () => {
    const p = new ToyLatentPipeline()
    expect(p.inferenceSteps(1)).toEqual([99])
    const ts = p.inferenceSteps(5)
    expect(ts[0]).toBe(99)
    expect(ts[ts.length - 1]).toBe(0)
    for (let i = 1; i < ts.length; i++) expect(ts[i]).toBeLessThan(ts[i - 1])
    expect(() => p.inferenceSteps(0)).toThrow(RangeError)
  })

  it('requires an image for gt modes', () => {
    const p = new ToyLatentPipeline()
    expect(() => p.run({
      tokenTexts: [], mode: 'gt_cfg', steps: 2, guidanceScale: 1,
    })).toThrow(/requires a ground-truth image/)
  })
})

describe('exportRun', () => {
  it('writes a valid dump with the expected axes', () => {
    const out = join(tmp, 'run.gamd')
    const pipeline = new ToyLatentPipeline()
    const dump = exportRun(pipeline, {
      caption: 'patchy opacity in the left lung',
      mode: 'gt_cfg', steps: 2, guidanceScale: 3, seed: 1,
      image: GT_IMAGE,
      groundTruth: { boxes: [[0, 0, 4, 4]], category: 'patchy' },
      out,
    })
    expect(dump.timesteps).toHaveLength(2)
    expect(dump.layers.map((l) => l.width)).toEqual([8, 4])
    const back = readDump(out)
    expect(back.dump.timesteps).toEqual(dump.timesteps)
    expect(back.dump.meta.mode).toBe('gt_cfg')
    expect(back.gt[0]?.category).toBe('patchy')
    expect(existsSync(`${out}.json`)).toBe(true)
  })

  it('is deterministic for a fixed seed', () => {
    const mk = (name: string) => {
      const out = join(tmp, name)
      return encodeDump(exportRun(new ToyLatentPipeline(), {
        caption: 'a round nodule', mode: 'cfg', steps: 3,
        guidanceScale: 2, seed: 7, out,
      }))
    }
    expect(mk('det1.gamd').equals(mk('det2.gamd'))).toBe(true)
  })

  it('rejects pipelines without interceptable attention', () => {
    const opaque = {
      interceptable: false,
      config: new ToyLatentPipeline().config,
      setAttentionInterceptor: () => {},
      run: () => new Float64Array(),
    }
    expect(() => exportRun(opaque, {
      caption: 'x spot', mode: 'text', steps: 1, guidanceScale: 0,
      out: join(tmp, 'nope.gamd'),
    })).toThrow(UnsupportedPipelineError)
  })
})

describe('cli', () => {
  it('exports via the command line with --caption/--image/--mode/--steps/--guidance/--out', () => {
    const img = join(tmp, 'gt.json')
    writeFileSync(img, JSON.stringify(GT_IMAGE))
    const out = join(tmp, 'cli.gamd')
    const cliJs = join(here, '..', 'dist', 'cli.js')
    const stdout = execFileSync(process.execPath, [
      cliJs,
      '--caption', 'patchy opacity in the lung',
      '--image', img,
      '--mode', 'gt1_cfg',
      '--steps', '2',
      '--guidance', '3.0',
      '--out', out,
    ], { encoding: 'utf-8' })
    expect(stdout).toContain('T=2')
    const { dump } = readDump(out)
    expect(dump.timesteps).toHaveLength(2)
    expect(dump.layers).toHaveLength(2)
    expect(dump.meta.steps).toBe(2)
  })

  it('fails cleanly on unknown flags', () => {
    const cliJs = join(here, '..', 'dist', 'cli.js')
    expect(() => execFileSync(process.execPath, [
      cliJs, '--caption', 'x', '--out', join(tmp, 'y.gamd'), '--bogus',
    ], { encoding: 'utf-8', stdio: 'pipe' })).toThrow()
  })
})
