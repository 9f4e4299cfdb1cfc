// Operator console: live locator loop plus the evaluation dashboard.
//
// The session flow is strictly sequential: one in-flight turn at a time, the
// form disabled while a request runs or after the session stops.

import { ApiClient, ServiceError } from './api.js'
import { countPeaks, heatmapToRgba, toCanvas } from './heatmap.js'
import { cmcSeries, parseReport, perTurnGroups, reportLabel } from './report.js'
import { renderLineChart, type Series } from './charts.js'
import type { SessionCreated, TurnResponse, WorldSummary } from './types.js'

const CANVAS_SIZE = 512
const PALETTE = ['#d62728', '#1f77b4', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b']

interface TimelineEntry {
  locator: string
  observer: string
  response: TurnResponse
}

class ConsoleApp {
  private api = new ApiClient()
  private session: SessionCreated | null = null
  private timeline: TimelineEntry[] = []
  private stopped = false
  private busy = false
  private mapBitmap: HTMLImageElement | null = null

  constructor(private root: Document) {}

  el<T extends HTMLElement>(id: string): T {
    const node = this.root.getElementById(id)
    if (!node) throw new Error(`missing element #${id}`)
    return node as T
  }

  async init(): Promise<void> {
    await this.refreshWorlds()
    this.el<HTMLButtonElement>('start-session').addEventListener('click', () => void this.startSession())
    this.el<HTMLButtonElement>('submit-turn').addEventListener('click', () => void this.submitTurn())
    this.el<HTMLButtonElement>('stop-session').addEventListener('click', () => void this.stopSession())
    this.el<HTMLInputElement>('report-file').addEventListener('change', (ev) => void this.loadReports(ev))
    this.el<HTMLInputElement>('overlay-opacity').addEventListener('input', () => this.redraw())
  }

  banner(message: string, kind: 'error' | 'info' = 'error'): void {
    const node = this.el<HTMLDivElement>('banner')
    node.textContent = message
    node.className = message ? `banner ${kind}` : 'banner hidden'
  }

  private async refreshWorlds(): Promise<void> {
    try {
      const [worlds, checkpoints] = await Promise.all([this.api.listWorlds(), this.api.listCheckpoints()])
      const select = this.el<HTMLSelectElement>('world-select')
      select.innerHTML = ''
      for (const world of worlds.worlds) {
        const opt = this.root.createElement('option')
        opt.value = world.worldId
        opt.textContent = `${world.worldId} (${world.rooms.length} rooms)`
        select.appendChild(opt)
      }
      this.el<HTMLSpanElement>('checkpoint-name').textContent =
        checkpoints.checkpoints[0]?.checkpointId ?? 'none'
    } catch (err) {
      this.banner(`service unreachable: ${(err as Error).message}`)
    }
  }

  async startSession(): Promise<void> {
    const worldId = this.el<HTMLSelectElement>('world-select').value
    if (!worldId) return
    this.banner('')
    try {
      this.session = await this.api.createSession(worldId)
    } catch (err) {
      this.session = null
      this.banner(err instanceof ServiceError ? `${err.code}: ${err.message}` : String(err))
      return
    }
    this.timeline = []
    this.stopped = false
    this.mapBitmap = new Image()
    this.mapBitmap.onload = () => this.redraw()
    this.mapBitmap.src = `data:image/png;base64,${this.session.mapImage}`
    this.renderWorldSummary(this.session.worldSummary)
    this.renderTimeline()
    this.updateReadouts(null)
    this.setFormEnabled(true)
    this.el<HTMLDivElement>('session-panel').classList.remove('hidden')
  }

  setFormEnabled(enabled: boolean): void {
    this.el<HTMLInputElement>('locator-text').disabled = !enabled
    this.el<HTMLInputElement>('observer-text').disabled = !enabled
    this.el<HTMLButtonElement>('submit-turn').disabled = !enabled
  }

  async submitTurn(): Promise<void> {
    if (!this.session || this.busy || this.stopped) return
    const locator = this.el<HTMLInputElement>('locator-text').value.trim()
    const observer = this.el<HTMLInputElement>('observer-text').value.trim()
    if (!locator || !observer) {
      this.banner('both utterances are required', 'info')
      return
    }
    this.busy = true
    this.setFormEnabled(false)
    try {
      const response = await this.api.submitTurn(this.session.sessionId, locator, observer)
      this.timeline.push({ locator, observer, response })
      this.renderTimeline()
      this.updateReadouts(response)
      this.redraw()
      this.el<HTMLInputElement>('locator-text').value = ''
      this.el<HTMLInputElement>('observer-text').value = ''
      this.banner('')
      this.setFormEnabled(true)
    } catch (err) {
      if (err instanceof ServiceError && err.code === 'turn_limit') {
        this.banner('turn cap reached; stop the session to read the final answer', 'info')
        this.setFormEnabled(false)
      } else {
        this.banner(err instanceof ServiceError ? `${err.code}: ${err.message}` : String(err))
        this.setFormEnabled(true)
      }
    } finally {
      this.busy = false
    }
  }

  async stopSession(): Promise<void> {
    if (!this.session) return
    this.stopped = true
    this.setFormEnabled(false)
    const last = this.timeline[this.timeline.length - 1]
    const final = this.el<HTMLDivElement>('final-answer')
    if (last) {
      const top = last.response.topK[0]
      final.textContent =
        `final answer: node ${top.snappedNode} in the ${top.roomLabel} ` +
        `(confidence ${last.response.confidenceAtTop1.toFixed(4)})`
    } else {
      final.textContent = 'stopped before any turns'
    }
    try {
      await this.api.closeSession(this.session.sessionId)
    } catch {
      // closing is best-effort; the view stays frozen either way
    }
  }

  private renderWorldSummary(summary: WorldSummary): void {
    const labels = new Map<string, number>()
    for (const room of summary.rooms) {
      labels.set(room.label, (labels.get(room.label) ?? 0) + 1)
    }
    const text = [...labels.entries()].map(([l, n]) => (n > 1 ? `${n}x ${l}` : l)).join(', ')
    this.el<HTMLDivElement>('world-summary').textContent =
      `${summary.worldId}: ${summary.rooms.length} rooms (${text}), ${summary.nodeCount} waypoints`
  }

  private renderTimeline(): void {
    const list = this.el<HTMLOListElement>('timeline')
    list.innerHTML = ''
    for (const entry of this.timeline) {
      const item = this.root.createElement('li')
      const peaks = countPeaks(entry.response.heatmap)
      item.innerHTML =
        `<span class="who">locator</span> ${escapeHtml(entry.locator)}<br>` +
        `<span class="who">observer</span> ${escapeHtml(entry.observer)}<br>` +
        `<img class="thumb" src="data:image/png;base64,${entry.response.heatmapImage}" alt="turn ${entry.response.turnIndex} belief">` +
        `<span class="meta">turn ${entry.response.turnIndex}: ${peaks.length} peak${peaks.length === 1 ? '' : 's'}, ` +
        `top-1 ${escapeHtml(entry.response.topK[0]?.roomLabel ?? '-')}</span>`
      list.appendChild(item)
    }
  }

  private updateReadouts(response: TurnResponse | null): void {
    const conf = this.el<HTMLSpanElement>('confidence')
    const spread = this.el<HTMLSpanElement>('spread')
    const peaks = this.el<HTMLSpanElement>('peak-count')
    if (!response) {
      conf.textContent = spread.textContent = peaks.textContent = '-'
      return
    }
    conf.textContent = response.confidenceAtTop1.toFixed(4)
    spread.textContent = `${response.geodesicSpreadMeters.toFixed(2)} m`
    peaks.textContent = String(countPeaks(response.heatmap).length)
  }

  private redraw(): void {
    if (!this.session || !this.mapBitmap) return
    const canvas = this.el<HTMLCanvasElement>('map-canvas')
    canvas.width = CANVAS_SIZE
    canvas.height = CANVAS_SIZE
    const ctx = canvas.getContext('2d')
    if (!ctx) return
    ctx.imageSmoothingEnabled = false
    ctx.drawImage(this.mapBitmap, 0, 0, CANVAS_SIZE, CANVAS_SIZE)
    const last = this.timeline[this.timeline.length - 1]
    if (!last) return
    const opacity = Number(this.el<HTMLInputElement>('overlay-opacity').value) / 100
    const { height, width } = last.response.heatmap
    const rgba = heatmapToRgba(last.response.heatmap)
    const off = this.root.createElement('canvas')
    off.width = width
    off.height = height
    const offCtx = off.getContext('2d')
    if (!offCtx) return
    const buffer = new Uint8ClampedArray(rgba.length)
    buffer.set(rgba)
    offCtx.putImageData(new ImageData(buffer, width, height), 0, 0)
    ctx.globalAlpha = opacity
    ctx.drawImage(off, 0, 0, CANVAS_SIZE, CANVAS_SIZE)
    ctx.globalAlpha = 1.0
    const mapSize = this.session.worldSummary.widthPx
    last.response.topK.forEach((entry, i) => {
      const [x, y] = toCanvas(entry.pixel, mapSize, CANVAS_SIZE)
      ctx.beginPath()
      ctx.arc(x, y, 11, 0, 2 * Math.PI)
      ctx.fillStyle = 'rgba(255,255,255,0.85)'
      ctx.fill()
      ctx.strokeStyle = '#222'
      ctx.stroke()
      ctx.fillStyle = '#222'
      ctx.font = 'bold 12px sans-serif'
      ctx.textAlign = 'center'
      ctx.textBaseline = 'middle'
      ctx.fillText(String(i + 1), x, y)
    })
  }

  private async loadReports(ev: Event): Promise<void> {
    const input = ev.target as HTMLInputElement
    if (!input.files || input.files.length === 0) return
    const cmc: Series[] = []
    const perTurn: Series[] = []
    let failed = ''
    for (let i = 0; i < input.files.length; i++) {
      const file = input.files[i]
      try {
        const report = parseReport(await file.text())
        const color = PALETTE[i % PALETTE.length]
        cmc.push({ label: reportLabel(report), points: cmcSeries(report), color })
        for (const [t, group] of perTurnGroups(report)) {
          perTurn.push({
            label: `${reportLabel(report)} T=${t}`,
            points: group.mean_le.map((le, idx) => [idx + 1, le] as [number, number]),
            color,
          })
        }
      } catch (err) {
        failed = `${file.name}: ${(err as Error).message}`
      }
    }
    this.banner(failed, failed ? 'error' : 'info')
    if (cmc.length) {
      this.el<HTMLDivElement>('cmc-chart').innerHTML = renderLineChart(cmc, {
        width: 460,
        height: 300,
        xLabel: 'error threshold (m)',
        yLabel: 'success rate',
        yMax: 1,
      })
      this.el<HTMLDivElement>('per-turn-chart').innerHTML = renderLineChart(perTurn, {
        width: 460,
        height: 300,
        xLabel: 'turn',
        yLabel: 'mean LE (m)',
      })
      this.el<HTMLDivElement>('dashboard').classList.remove('hidden')
    }
  }
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
}

if (typeof document !== 'undefined' && document.getElementById('map-canvas')) {
  const app = new ConsoleApp(document)
  void app.init()
}

export { ConsoleApp }
