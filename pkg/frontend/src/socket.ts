// Resumable event stream. Every event carries a cursor; after a dirty
// disconnect we reconnect asking for the first cursor we have not seen, so
// nothing is dropped and nothing is applied twice.

import type { ProtocolEvent, WsMessage } from "./types.js";

export type ConnectionStatus =
  | "connecting"
  | "open"
  | "disconnected"
  | "finished"
  | "stopped";

export interface SocketLike {
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: { code: number }) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface EventSocketOptions {
  urlFor: (cursor: number) => string;
  onEvent: (event: ProtocolEvent, cursor: number) => void;
  onStatus?: (status: ConnectionStatus) => void;
  makeSocket?: SocketFactory;
  retryDelayMs?: number;
  maxRetryDelayMs?: number;
}

const defaultFactory: SocketFactory = (url) => new WebSocket(url) as unknown as SocketLike;

export class EventSocket {
  private nextCursor = 0;
  private socket: SocketLike | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private attempts = 0;
  private stopped = false;

  constructor(private readonly opts: EventSocketOptions) {}

  get cursor(): number {
    return this.nextCursor;
  }

  start(fromCursor = 0): void {
    this.nextCursor = fromCursor;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    if (this.socket !== null) {
      this.socket.close();
      this.socket = null;
    }
    this.status("stopped");
  }

  private status(status: ConnectionStatus): void {
    this.opts.onStatus?.(status);
  }

  private connect(): void {
    this.status("connecting");
    const make = this.opts.makeSocket ?? defaultFactory;
    const socket = make(this.opts.urlFor(this.nextCursor));
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.status("open");
    };
    socket.onmessage = (ev) => {
      if (typeof ev.data !== "string") {
        return;
      }
      const message = JSON.parse(ev.data) as WsMessage;
      if (message.cursor < this.nextCursor) {
        return; // already applied before a reconnect
      }
      this.nextCursor = message.cursor + 1;
      this.opts.onEvent(message.event, message.cursor);
    };
    socket.onclose = (ev) => {
      this.socket = null;
      if (this.stopped) {
        return;
      }
      if (ev.code === 1000) {
        this.status("finished"); // server drained the run and hung up
        return;
      }
      this.status("disconnected");
      const base = this.opts.retryDelayMs ?? 500;
      const cap = this.opts.maxRetryDelayMs ?? 5000;
      const delay = Math.min(base * 2 ** this.attempts, cap);
      this.attempts += 1;
      this.timer = setTimeout(() => {
        this.timer = null;
        this.connect();
      }, delay);
    };
  }
}
