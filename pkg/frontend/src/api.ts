// Thin typed client over the v1 HTTP API. Every displayed number comes from
// these responses; the console never recomputes metrics client-side.

import type {
  ApiError,
  CheckpointInfo,
  SessionCreated,
  SessionState,
  TurnResponse,
  WorldSummary,
} from './types.js'

export class ServiceError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message)
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    const text = await resp.text()
    const data = text ? JSON.parse(text) : {}
    if (!resp.ok) {
      const err = data as ApiError
      throw new ServiceError(resp.status, err.code ?? 'error', err.message ?? resp.statusText)
    }
    return data as T
  }

  healthz(): Promise<{ status: string; version: string; checkpointHash: string }> {
    return this.request('GET', '/v1/healthz')
  }

  listWorlds(): Promise<{ worlds: WorldSummary[] }> {
    return this.request('GET', '/v1/worlds')
  }

  listCheckpoints(): Promise<{ checkpoints: CheckpointInfo[] }> {
    return this.request('GET', '/v1/checkpoints')
  }

  generateWorld(seed: number, params?: Record<string, unknown>): Promise<{ world: unknown; summary: WorldSummary }> {
    return this.request('POST', '/v1/worlds/generate', { seed, params })
  }

  createSession(worldId: string, checkpointId?: string): Promise<SessionCreated> {
    return this.request('POST', '/v1/sessions', { worldId, checkpointId })
  }

  submitTurn(sessionId: string, locator: string, observer: string): Promise<TurnResponse> {
    return this.request('POST', `/v1/sessions/${sessionId}/turns`, { locator, observer })
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.request('GET', `/v1/sessions/${sessionId}`)
  }

  closeSession(sessionId: string): Promise<{ sessionId: string; status: string }> {
    return this.request('DELETE', `/v1/sessions/${sessionId}`)
  }
}
