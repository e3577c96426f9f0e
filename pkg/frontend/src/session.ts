// Session driver: a fixed-rate tick loop that sends exactly one intended
// action per tick and surfaces the server echo to the renderer.

import { BridgeClient, ProtocolError, SessionView, Vec2 } from "./protocol.js";

export interface SessionCallbacks {
  onView(view: SessionView): void;
  onStatus(text: string, isError: boolean): void;
}

export interface TickerHandle {
  stop(): void;
}

export type Scheduler = (fn: () => void, ms: number) => unknown;

export class SessionDriver {
  private sessionId: string | null = null;
  private view: SessionView | null = null;
  private running = false;
  private intentSource: () => Vec2 = () => [0, 0];

  constructor(
    private readonly client: BridgeClient,
    private readonly callbacks: SessionCallbacks,
    private readonly scheduler: Scheduler = (fn, ms) => setTimeout(fn, ms),
  ) {}

  get currentView(): SessionView | null {
    return this.view;
  }

  get id(): string | null {
    return this.sessionId;
  }

  setIntentSource(fn: () => Vec2): void {
    this.intentSource = fn;
  }

  async start(opts: { sigma2?: number; seed?: number } = {}): Promise<SessionView> {
    const res = await this.client.start(opts);
    this.sessionId = res.session_id;
    this.view = res.view;
    this.callbacks.onView(res.view);
    this.callbacks.onStatus(`session ${res.session_id} active`, false);
    this.running = true;
    this.loop();
    return res.view;
  }

  /** Resume a still-active session after a transport hiccup. */
  async reconnect(): Promise<SessionView | null> {
    if (!this.sessionId) return null;
    const view = await this.client.state(this.sessionId);
    this.view = view;
    this.callbacks.onView(view);
    if (view.status === "active" && !this.running) {
      this.running = true;
      this.loop();
    }
    return view;
  }

  stop(): void {
    this.running = false;
  }

  async finish(accept: boolean): Promise<unknown> {
    if (!this.sessionId) return null;
    this.running = false;
    const res = await this.client.finish(this.sessionId, accept);
    this.callbacks.onStatus(`session ${this.sessionId}: ${res.status}`, false);
    return res.fragment;
  }

  private loop(): void {
    if (!this.running || !this.view) return;
    const periodMs = 1000 / this.view.tick_rate;
    const tickOnce = async () => {
      if (!this.running || !this.sessionId) return;
      try {
        const echo = await this.client.step(this.sessionId, this.intentSource());
        this.view = echo.view;
        this.callbacks.onView(echo.view);
        if (echo.view.status !== "active") {
          this.running = false;
          this.callbacks.onStatus(
            `episode ${echo.view.status} (score ${echo.view.score})`,
            echo.view.status === "failed",
          );
          return;
        }
      } catch (err) {
        if (err instanceof ProtocolError && err.status === 409) {
          this.running = false;
          this.callbacks.onStatus(`session ended: ${err.message}`, false);
          return;
        }
        this.running = false;
        this.callbacks.onStatus(`connection lost: ${String(err)} — retrying`, true);
        this.scheduler(() => void this.retry(), 1000);
        return;
      }
      this.scheduler(tickOnce, periodMs);
    };
    this.scheduler(tickOnce, periodMs);
  }

  private async retry(): Promise<void> {
    try {
      await this.reconnect();
      if (this.view?.status === "active") {
        this.callbacks.onStatus("reconnected", false);
      }
    } catch {
      this.callbacks.onStatus("server unreachable — retrying", true);
      this.scheduler(() => void this.retry(), 1000);
    }
  }
}

/** Drive a scripted number of ticks as fast as the server allows (used by
 * integration tests; the browser path uses the timed loop above). */
export async function streamTicks(
  client: BridgeClient,
  sessionId: string,
  intents: () => Vec2,
  ticks: number,
): Promise<SessionView> {
  let view: SessionView | null = null;
  for (let i = 0; i < ticks; i++) {
    const echo = await client.step(sessionId, intents());
    view = echo.view;
    if (view.status !== "active") break;
  }
  if (!view) throw new Error("no ticks executed");
  return view;
}
