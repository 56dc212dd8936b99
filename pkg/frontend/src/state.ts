// View state as a pure function of the received event sequence. The only
// thing layered on top is the pending optimistic mute, which the next
// StateChanged from the server settles.

import type { DeliveryPayload, MetricsPayload, ProtocolEvent } from "./types.js";

export const MAX_CARD_ITEMS = 2;

export interface FrameView {
  file: string;
  tMs: number;
  circles: [number, number][];
}

export interface CardView {
  delivery: DeliveryPayload;
  arrivedAtMs: number;
}

export type Phase = "waiting" | "running" | "finished" | "aborted";

export interface UiState {
  phase: Phase;
  runId: string | null;
  sessionId: string | null;
  variant: string | null;
  tMs: number;
  frame: FrameView | null;
  cards: CardView[];
  transcript: { deliveryId: string; text: string } | null;
  systemOn: boolean;
  muted: boolean;
  optimisticMuted: boolean | null;
  metrics: MetricsPayload | null;
  lastNote: string | null;
  abortError: string | null;
}

export function initialState(): UiState {
  return {
    phase: "waiting",
    runId: null,
    sessionId: null,
    variant: null,
    tMs: 0,
    frame: null,
    cards: [],
    transcript: null,
    systemOn: true,
    muted: false,
    optimisticMuted: null,
    metrics: null,
    lastNote: null,
    abortError: null,
  };
}

// The muted state the UI should show right now.
export function shownMuted(state: UiState): boolean {
  return state.optimisticMuted ?? state.muted;
}

export function apply(state: UiState, event: ProtocolEvent): UiState {
  const next: UiState = { ...state, cards: state.cards.slice() };
  if ("t_ms" in event && typeof event.t_ms === "number") {
    next.tMs = event.t_ms;
  }
  switch (event.type) {
    case "RunStarted":
      next.phase = "running";
      next.runId = event.run_id;
      next.sessionId = event.session_id;
      next.variant = event.variant;
      break;
    case "StateChanged":
      next.systemOn = event.system_on;
      next.muted = event.muted;
      next.optimisticMuted = null;
      break;
    case "FrameTick":
      next.frame = {
        file: event.frame_file,
        tMs: event.frame_t_ms,
        circles: event.circles,
      };
      break;
    case "Delivery": {
      // Mirror the engine cap instead of trusting the payload blindly.
      const delivery = {
        ...event.delivery,
        items: event.delivery.items.slice(0, MAX_CARD_ITEMS),
      };
      next.cards = [{ delivery, arrivedAtMs: event.t_ms }, ...next.cards];
      if (!delivery.audio_suppressed) {
        next.transcript = {
          deliveryId: delivery.id,
          text: delivery.items.map((item) => item.voiceover_text).join(" "),
        };
      }
      break;
    }
    case "Canceled":
      next.cards = next.cards.filter((card) => card.delivery.id !== event.delivery_id);
      if (next.transcript !== null && next.transcript.deliveryId === event.delivery_id) {
        next.transcript = null;
      }
      break;
    case "NoDelivery":
      next.lastNote = `no delivery (${event.reason})`;
      break;
    case "Suppressed":
      next.lastNote = `trigger suppressed (${event.reason})`;
      break;
    case "DeliveryDropped":
      next.lastNote = `delivery dropped (${event.reason})`;
      break;
    case "ProviderError":
      next.lastNote = `provider error at ${event.stage}: ${event.error}`;
      break;
    case "Metrics":
      next.metrics = event.metrics;
      break;
    case "RunFinished":
      next.phase = "finished";
      break;
    case "RunAborted":
      next.phase = "aborted";
      next.abortError = event.error;
      break;
    default:
      break;
  }
  return next;
}

export function replay(events: readonly ProtocolEvent[]): UiState {
  let state = initialState();
  for (const event of events) {
    state = apply(state, event);
  }
  return state;
}
