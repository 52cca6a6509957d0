/**
 * Caption tokenization for the bridge: lowercase word split, special
 * start/end/pad framing, and lexical/disease flagging via small word lists.
 */

import type { TokenMeta } from './gamd.js'

/** Function words carry no grounding signal and stay non-lexical. */
export const STOPWORDS = new Set([
  'a', 'an', 'the', 'and', 'or', 'of', 'in', 'on', 'at', 'to', 'with',
  'is', 'are', 'was', 'were', 'there', 'no', 'without',
])

/** Finding terms flagged as disease tokens. */
export const DISEASE_WORDS = new Set([
  'patchy', 'opacity', 'opacities', 'consolidation', 'effusion', 'edema',
  'nodule', 'mass', 'pneumothorax', 'atelectasis', 'infiltrate',
])

export class CaptionError extends Error {}

export function tokenizeCaption (caption: string, nMax: number): TokenMeta[] {
  const words = caption
    .toLowerCase()
    .split(/[^a-z0-9]+/)
    .filter((w) => w.length > 0)
  if (words.length === 0) throw new CaptionError('caption has no words')
  if (words.length + 2 > nMax) {
    throw new CaptionError(
      `caption has ${words.length} words; at most ${nMax - 2} fit in N_max=${nMax}`,
    )
  }
  const tokens: TokenMeta[] = [{ text: '[start]', is_start: true }]
  for (const w of words) {
    const lexical = !STOPWORDS.has(w)
    tokens.push({
      text: w,
      is_lexical: lexical,
      is_disease: lexical && DISEASE_WORDS.has(w),
    })
  }
  tokens.push({ text: '[end]', is_end: true })
  while (tokens.length < nMax) tokens.push({ text: '[pad]', is_pad: true })
  return tokens
}
