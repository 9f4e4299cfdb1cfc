// Belief-heatmap rendering helpers: a perceptually monotone single-hue ramp
// (intensity preserves the probability rank order), overlay compositing, and
// peak extraction for the candidate count readout.

import type { HeatmapPayload } from './types.js'

export interface Rgba {
  r: number
  g: number
  b: number
  a: number
}

/** Monotone orange ramp: rank order of probabilities is preserved exactly. */
export function rampColor(value: number, maxValue: number): Rgba {
  const t = maxValue > 0 ? Math.min(1, Math.max(0, value / maxValue)) : 0
  return {
    r: 255,
    g: Math.round(140 * (1 - t) + 40 * t),
    b: 20,
    a: Math.round(220 * Math.pow(t, 0.65)),
  }
}

/** RGBA buffer (row-major, 4 bytes/px) for compositing over the map image. */
export function heatmapToRgba(heatmap: HeatmapPayload): Uint8ClampedArray {
  const { height, width, values } = heatmap
  if (values.length !== height * width) {
    throw new Error(`heatmap payload length ${values.length} != ${height}x${width}`)
  }
  const max = values.reduce((a, b) => Math.max(a, b), 0)
  const out = new Uint8ClampedArray(height * width * 4)
  for (let i = 0; i < values.length; i++) {
    const { r, g, b, a } = rampColor(values[i], max)
    out[i * 4] = r
    out[i * 4 + 1] = g
    out[i * 4 + 2] = b
    out[i * 4 + 3] = a
  }
  return out
}

export interface Peak {
  row: number
  col: number
  value: number
}

/**
 * Spatially distinct probability peaks: greedy maxima with an exclusion
 * radius, keeping peaks above `threshold` (a fraction of the global max).
 * Mirrors the service's top-k suppression so displayed counts match it.
 */
export function countPeaks(
  heatmap: HeatmapPayload,
  radiusPx = 8,
  threshold = 0.35,
  maxPeaks = 8,
): Peak[] {
  const { height, width, values } = heatmap
  const work = values.slice()
  const peaks: Peak[] = []
  const globalMax = values.reduce((a, b) => Math.max(a, b), 0)
  if (globalMax <= 0) return peaks
  for (let n = 0; n < maxPeaks; n++) {
    let best = -1
    let bestIdx = -1
    for (let i = 0; i < work.length; i++) {
      if (work[i] > best) {
        best = work[i]
        bestIdx = i
      }
    }
    if (bestIdx < 0 || best < threshold * globalMax) break
    const row = Math.floor(bestIdx / width)
    const col = bestIdx % width
    peaks.push({ row, col, value: best })
    const r2 = radiusPx * radiusPx
    for (let dr = -radiusPx; dr <= radiusPx; dr++) {
      for (let dc = -radiusPx; dc <= radiusPx; dc++) {
        if (dr * dr + dc * dc > r2) continue
        const rr = row + dr
        const cc = col + dc
        if (rr >= 0 && rr < height && cc >= 0 && cc < width) {
          work[rr * width + cc] = -1
        }
      }
    }
  }
  return peaks
}

/** Map a heatmap pixel to canvas coordinates at the rendered scale. */
export function toCanvas(pixel: [number, number], mapSize: number, canvasSize: number): [number, number] {
  const s = canvasSize / mapSize
  return [pixel[1] * s + s / 2, pixel[0] * s + s / 2] // (x, y)
}
