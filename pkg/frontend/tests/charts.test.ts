import { describe, expect, it } from 'vitest'

import { escapeXml, polylinePath, renderLineChart } from '../src/charts.js'

const spec = { width: 400, height: 300, xLabel: 'k', yLabel: 'rate' }

describe('polylinePath', () => {
  it('maps increasing y to decreasing svg y (origin bottom-left)', () => {
    const path = polylinePath(
      [
        [0, 0],
        [10, 1],
      ],
      spec,
      10,
      1,
    )
    const [m, l] = path.split(' ')
    const y0 = Number(m.split(',')[1])
    const y1 = Number(l.split(',')[1])
    expect(y1).toBeLessThan(y0)
  })
})

describe('renderLineChart', () => {
  it('renders one path per series plus axes and legend', () => {
    const svg = renderLineChart(
      [
        { label: 'a', points: [[0, 0.1], [5, 0.5]], color: '#d62728' },
        { label: 'b', points: [[0, 0.2], [5, 0.9]], color: '#1f77b4' },
      ],
      { ...spec, yMax: 1 },
    )
    expect(svg.match(/<path/g)?.length).toBe(2)
    expect(svg).toContain('#d62728')
    expect(svg).toContain('>a</text>')
    expect(svg.startsWith('<svg')).toBe(true)
  })

  it('escapes labels', () => {
    expect(escapeXml('a<b & "c"')).toBe('a&lt;b &amp; &quot;c&quot;')
  })
})
