// Minimal dependency-free SVG line charts for the evaluation dashboard.

export interface Series {
  label: string
  points: [number, number][]
  color: string
}

export interface ChartSpec {
  width: number
  height: number
  xLabel: string
  yLabel: string
  yMax?: number
}

const MARGIN = { left: 44, right: 12, top: 12, bottom: 34 }

export function polylinePath(
  points: [number, number][],
  spec: ChartSpec,
  xMax: number,
  yMax: number,
): string {
  const innerW = spec.width - MARGIN.left - MARGIN.right
  const innerH = spec.height - MARGIN.top - MARGIN.bottom
  return points
    .map(([x, y], i) => {
      const px = MARGIN.left + (xMax > 0 ? (x / xMax) * innerW : 0)
      const py = MARGIN.top + innerH - (yMax > 0 ? (y / yMax) * innerH : 0)
      return `${i === 0 ? 'M' : 'L'}${px.toFixed(1)},${py.toFixed(1)}`
    })
    .join(' ')
}

export function renderLineChart(seriesList: Series[], spec: ChartSpec): string {
  const xMax = Math.max(1, ...seriesList.flatMap((s) => s.points.map((p) => p[0])))
  const yMax = spec.yMax ?? Math.max(1e-9, ...seriesList.flatMap((s) => s.points.map((p) => p[1])))
  const lines = seriesList
    .map(
      (s) =>
        `<path d="${polylinePath(s.points, spec, xMax, yMax)}" fill="none" stroke="${s.color}" stroke-width="2"/>`,
    )
    .join('')
  const legend = seriesList
    .map(
      (s, i) =>
        `<text x="${MARGIN.left + 6}" y="${MARGIN.top + 14 + i * 16}" fill="${s.color}" font-size="11">${escapeXml(s.label)}</text>`,
    )
    .join('')
  const axes =
    `<line x1="${MARGIN.left}" y1="${spec.height - MARGIN.bottom}" x2="${spec.width - MARGIN.right}" ` +
    `y2="${spec.height - MARGIN.bottom}" stroke="#666"/>` +
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${spec.height - MARGIN.bottom}" stroke="#666"/>` +
    `<text x="${spec.width / 2}" y="${spec.height - 8}" text-anchor="middle" font-size="11" fill="#444">${escapeXml(spec.xLabel)}</text>` +
    `<text x="12" y="${spec.height / 2}" font-size="11" fill="#444" transform="rotate(-90 12 ${spec.height / 2})" text-anchor="middle">${escapeXml(spec.yLabel)}</text>` +
    `<text x="${MARGIN.left - 6}" y="${MARGIN.top + 4}" text-anchor="end" font-size="10" fill="#444">${yMax.toFixed(2)}</text>`
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${spec.width}" height="${spec.height}" ` +
    `viewBox="0 0 ${spec.width} ${spec.height}">${axes}${lines}${legend}</svg>`
  )
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
}
