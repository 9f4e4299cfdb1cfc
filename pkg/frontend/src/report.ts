// Evaluation-report loading: validate shape, expose the stored series as-is.

import type { LocalizationReportFile, PerTurnGroup } from './types.js'

export class ReportParseError extends Error {}

export function parseReport(text: string): LocalizationReportFile {
  let data: unknown
  try {
    data = JSON.parse(text)
  } catch (e) {
    throw new ReportParseError(`not valid JSON: ${(e as Error).message}`)
  }
  const report = data as LocalizationReportFile
  if (report.report_version !== 1) {
    throw new ReportParseError(`unsupported report_version ${String(report.report_version)}`)
  }
  for (const field of ['method', 'mode', 'split', 'aggregates', 'cmc', 'per_turn'] as const) {
    if (!(field in report)) throw new ReportParseError(`report is missing "${field}"`)
  }
  if (!Array.isArray(report.cmc) || report.cmc.some((p) => p.length !== 2)) {
    throw new ReportParseError('cmc series malformed')
  }
  return report
}

export function reportLabel(report: LocalizationReportFile): string {
  return `${report.method} / ${report.mode} / ${report.split}`
}

/** The stored CMC series, exactly as the evaluator wrote it. */
export function cmcSeries(report: LocalizationReportFile): [number, number][] {
  return report.cmc
}

/** Per-dialog-length groups sorted by length. */
export function perTurnGroups(report: LocalizationReportFile): [number, PerTurnGroup][] {
  return Object.entries(report.per_turn)
    .map(([t, g]) => [Number(t), g] as [number, PerTurnGroup])
    .sort((a, b) => a[0] - b[0])
}
