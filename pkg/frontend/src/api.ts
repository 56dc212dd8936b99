// Thin wrappers over the service's HTTP routes.

import type { ButtonName, RunStatus } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string | null = null,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  wsUrl(runId: string, cursor: number): string {
    const http = new URL(this.baseUrl);
    const scheme = http.protocol === "https:" ? "wss:" : "ws:";
    let url = `${scheme}//${http.host}/runs/${encodeURIComponent(runId)}/events?cursor=${cursor}`;
    if (this.token !== null) {
      url += `&token=${encodeURIComponent(this.token)}`;
    }
    return url;
  }

  // Frame paths arrive as /sessions/{id}/frames/{name}; img tags cannot send
  // an Authorization header, so the token rides along as a query parameter.
  frameUrl(file: string): string {
    let url = this.baseUrl + file;
    if (this.token !== null) {
      url += `?token=${encodeURIComponent(this.token)}`;
    }
    return url;
  }

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const headers = new Headers(init.headers);
    if (this.token !== null) {
      headers.set("Authorization", `Bearer ${this.token}`);
    }
    const response = await this.fetchImpl(this.baseUrl + path, { ...init, headers });
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        if (typeof body.detail === "string") {
          detail = body.detail;
        }
      } catch {
        // Keep the status string for non-JSON error bodies.
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request(path)).json() as Promise<T>;
  }

  async listSessions(): Promise<string[]> {
    return (await this.getJson<{ sessions: string[] }>("/sessions")).sessions;
  }

  async listProfiles(): Promise<string[]> {
    return (await this.getJson<{ profiles: string[] }>("/profiles")).profiles;
  }

  async startRun(body: {
    session_id: string;
    profile_id: string;
    pace?: string;
    speed?: number;
    config?: Record<string, unknown>;
  }): Promise<{ run_id: string }> {
    const response = await this.request("/runs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return response.json() as Promise<{ run_id: string }>;
  }

  async runStatus(runId: string): Promise<RunStatus> {
    return this.getJson<RunStatus>(`/runs/${encodeURIComponent(runId)}`);
  }

  async pressButton(runId: string, button: ButtonName, queryText?: string): Promise<void> {
    const body: Record<string, unknown> = { button };
    if (queryText !== undefined) {
      body.query_text = queryText;
    }
    await this.request(`/runs/${encodeURIComponent(runId)}/buttons`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
