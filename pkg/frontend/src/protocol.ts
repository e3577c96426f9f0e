// JSON protocol spoken by the demo bridge. The server is authoritative for
// noise and recording; this client only posts intents and renders echoes.

export type Vec2 = [number, number];

export interface BoxView {
  pos: Vec2;
  half_size: number;
  on_table: boolean;
}

export interface SessionView {
  protocol: number;
  session_id: string;
  tick: number;
  status: "active" | "succeeded" | "failed" | "discarded" | "accepted";
  score: number;
  robot: Vec2;
  boxes: BoxView[];
  sigma2: number;
  tick_rate: number;
  horizon: number;
  table_half_extent: number;
  robot_radius: number;
  action_limit: number;
  intended: Vec2 | null;
  executed: Vec2 | null;
}

export interface StepEcho {
  view: SessionView;
  intended: Vec2;
  executed: Vec2;
}

export interface ServerInfo {
  protocol: number;
  version: string;
  sigma2: number;
  tick_rate: number;
  realtime: boolean;
  env: Record<string, unknown>;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ProtocolError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(fetchImpl: FetchLike, url: string, init?: RequestInit): Promise<T> {
  const res = await fetchImpl(url, init);
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ProtocolError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class BridgeClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  info(): Promise<ServerInfo> {
    return request(this.fetchImpl, `${this.baseUrl}/api/info`);
  }

  start(body: { sigma2?: number; seed?: number; tick_rate?: number } = {}): Promise<{
    session_id: string;
    view: SessionView;
  }> {
    return request(this.fetchImpl, `${this.baseUrl}/api/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  state(sessionId: string): Promise<SessionView> {
    return request(this.fetchImpl, `${this.baseUrl}/api/sessions/${sessionId}`);
  }

  step(sessionId: string, intended: Vec2): Promise<StepEcho> {
    return request(this.fetchImpl, `${this.baseUrl}/api/sessions/${sessionId}/step`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ intended }),
    });
  }

  finish(sessionId: string, accept: boolean): Promise<{ status: string; fragment: unknown }> {
    return request(this.fetchImpl, `${this.baseUrl}/api/sessions/${sessionId}/finish`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ accept }),
    });
  }
}
