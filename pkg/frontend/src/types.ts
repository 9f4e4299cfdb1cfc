// JSON payload shapes of the localizer service (v1 API), mirrored verbatim.

export interface WorldSummary {
  worldId: string
  widthPx: number
  heightPx: number
  metersPerPixel: number
  rooms: { roomId: string; label: string }[]
  nodeCount: number
}

export interface SessionCreated {
  sessionId: string
  mapImage: string // base64 PNG
  worldSummary: WorldSummary
}

export interface HeatmapPayload {
  height: number
  width: number
  values: number[] // row-major probabilities, 4-decimal precision
}

export interface TopKEntry {
  pixel: [number, number] // (row, col) in map coordinates
  probability: number
  snappedNode: number
  roomLabel: string
}

export interface TurnResponse {
  turnIndex: number
  heatmap: HeatmapPayload
  heatmapImage: string // base64 PNG, grayscale
  topK: TopKEntry[]
  confidenceAtTop1: number
  geodesicSpreadMeters: number
}

export interface TurnHistoryEntry {
  turnIndex: number
  locator: string
  observer: string
  response: TurnResponse
}

export interface SessionState {
  sessionId: string
  worldId: string
  checkpointId: string
  status: 'active' | 'closed'
  createdAt: number
  turnIndex: number
  history: TurnHistoryEntry[]
}

export interface CheckpointInfo {
  checkpointId: string
  variant: string
  step: number | null
  configHash: string
}

export interface ApiError {
  code: string
  message: string
}

// Evaluation report files (report_version 1), rendered without recomputation.

export interface ReportTurn {
  t: number
  predPixel: [number, number]
  snappedNode: number
  le: number
  confAtGt: number
}

export interface ReportSample {
  sampleId: string
  worldId: string
  T: number
  turns: ReportTurn[]
  finalLE: number
  acc0: boolean
  acc5: boolean
}

export interface PerTurnGroup {
  count: number
  mean_le: number[]
  mean_conf: number[]
}

export interface LocalizationReportFile {
  report_version: number
  method: string
  mode: string
  split: string
  config_hash: string
  aggregates: { acc0: number; acc5: number; meanLE: number }
  cmc: [number, number][]
  per_turn: Record<string, PerTurnGroup>
  samples: ReportSample[]
}
