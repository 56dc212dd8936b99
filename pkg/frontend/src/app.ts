// Glue: one socket, one event queue, one state, one view. The socket
// handler only enqueues; a microtask drains the queue in arrival order and
// renders once per batch, so rendering never back-pressures the stream.

import type { ServiceClient } from "./api.js";
import { attachControls } from "./controls.js";
import { View } from "./render.js";
import { EventSocket, type ConnectionStatus, type SocketFactory } from "./socket.js";
import { apply, initialState, type UiState } from "./state.js";
import type { ProtocolEvent } from "./types.js";

export interface AppOptions {
  root: HTMLElement;
  client: ServiceClient;
  makeSocket?: SocketFactory;
  retryDelayMs?: number;
}

export class App {
  state: UiState = initialState();
  status: ConnectionStatus = "stopped";
  readonly view: View;
  private socket: EventSocket | null = null;
  private queue: ProtocolEvent[] = [];
  private flushScheduled = false;
  private runId: string | null = null;

  constructor(private readonly opts: AppOptions) {
    this.view = new View(opts.root, {
      frameSrc: (file) => opts.client.frameUrl(file),
    });
    attachControls(this.view, {
      client: opts.client,
      runId: () => this.runId,
      getState: () => this.state,
      setOptimisticMuted: (value) => {
        this.state = { ...this.state, optimisticMuted: value };
      },
      rerender: () => this.render(),
    });
    this.render();
  }

  get connectedRunId(): string | null {
    return this.runId;
  }

  connect(runId: string): void {
    this.socket?.stop();
    this.runId = runId;
    this.state = initialState();
    this.queue = [];
    this.socket = new EventSocket({
      urlFor: (cursor) => this.opts.client.wsUrl(runId, cursor),
      onEvent: (event) => this.enqueue(event),
      onStatus: (status) => {
        this.status = status;
        this.render();
      },
      makeSocket: this.opts.makeSocket,
      retryDelayMs: this.opts.retryDelayMs,
    });
    this.socket.start(0);
  }

  disconnect(): void {
    this.socket?.stop();
    this.socket = null;
    this.runId = null;
  }

  async startRun(body: {
    session_id: string;
    profile_id: string;
    pace?: string;
    speed?: number;
    config?: Record<string, unknown>;
  }): Promise<string> {
    const { run_id } = await this.opts.client.startRun(body);
    this.connect(run_id);
    return run_id;
  }

  private enqueue(event: ProtocolEvent): void {
    this.queue.push(event);
    if (!this.flushScheduled) {
      this.flushScheduled = true;
      queueMicrotask(() => this.flush());
    }
  }

  // Drains everything received so far; also the test hook for determinism.
  flush(): void {
    this.flushScheduled = false;
    if (this.queue.length === 0) {
      return;
    }
    const batch = this.queue;
    this.queue = [];
    for (const event of batch) {
      this.state = apply(this.state, event);
    }
    this.render();
  }

  render(): void {
    this.view.render(this.state, this.status);
  }
}
