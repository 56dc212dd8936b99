// Builders for protocol events shaped exactly like the service emits them.

import type {
  BoxPayload,
  ButtonName,
  ButtonPressedEvent,
  CanceledEvent,
  DeliveryEvent,
  DeliveryItemPayload,
  DeliveryPayload,
  FrameTickEvent,
  MetricsEvent,
  ProtocolEvent,
  RunAbortedEvent,
  RunFinishedEvent,
  RunStartedEvent,
  StateChangedEvent,
  TriggerFiredEvent,
} from "../src/types.js";

const SCHEMA = "trace/1";

export function runStarted(t = 0, runId = "fixture.r0001"): RunStartedEvent {
  return {
    schema: SCHEMA,
    type: "RunStarted",
    t_ms: t,
    run_id: runId,
    session_id: "fixture",
    variant: "full",
    duration_ms: 180_000,
    frames: 720,
  };
}

export function stateChanged(t: number, systemOn: boolean, muted: boolean): StateChangedEvent {
  return { schema: SCHEMA, type: "StateChanged", t_ms: t, system_on: systemOn, muted };
}

export function frameTick(
  t: number,
  file = "/sessions/fixture/frames/000000.png",
  circles: [number, number][] = [],
): FrameTickEvent {
  return { schema: SCHEMA, type: "FrameTick", t_ms: t, frame_file: file, frame_t_ms: t, circles };
}

export function box(entity = "crane", overrides: Partial<BoxPayload> = {}): BoxPayload {
  return { entity, x: 0.2, y: 0.3, w: 0.25, h: 0.2, clamped: false, ...overrides };
}

export function item(overrides: Partial<DeliveryItemPayload> = {}): DeliveryItemPayload {
  return {
    content: "The harbor crane dates from the steam era.",
    knowledge_type: "Factual",
    entities: ["harbor crane"],
    factors: { novelty: 1, interest_alignment: 1, usefulness: 0, unexpectedness: 0 },
    factor_reasoning: null,
    total: 2,
    max_history_sim: 0.1,
    affinity: 0.4,
    keyword_emoji_pairs: [["harbor crane", "🏗️"]],
    voiceover_text: "That crane on your left is a steam era survivor.",
    image: {
      chosen_frame_t_ms: 15_750,
      frame_file: "/sessions/fixture/frames/000063.png",
      boxes: [box()],
    },
    ...overrides,
  };
}

export function delivery(
  id: string,
  t: number,
  opts: {
    items?: DeliveryItemPayload[];
    audioSuppressed?: boolean;
    triggerKind?: string;
  } = {},
): DeliveryEvent {
  const payload: DeliveryPayload = {
    schema: "delivery/1",
    id,
    trigger_kind: opts.triggerKind ?? "ConstantSensing",
    trigger_t_ms: t,
    delivered_at_ms: t,
    canceled: false,
    audio_suppressed: opts.audioSuppressed ?? false,
    items: opts.items ?? [item()],
  };
  return { schema: SCHEMA, type: "Delivery", t_ms: t, delivery: payload };
}

export function canceled(t: number, deliveryId: string): CanceledEvent {
  return { schema: SCHEMA, type: "Canceled", t_ms: t, delivery_id: deliveryId };
}

export function buttonPressed(t: number, button: ButtonName, effect: string): ButtonPressedEvent {
  return { schema: SCHEMA, type: "ButtonPressed", t_ms: t, button, effect };
}

export function triggerFired(t: number, kind: string): TriggerFiredEvent {
  return { schema: SCHEMA, type: "Trigger", t_ms: t, kind, trigger_t_ms: t, evidence_frames: [] };
}

export function metricsEvent(t: number): MetricsEvent {
  return {
    schema: SCHEMA,
    type: "Metrics",
    t_ms: t,
    metrics: {
      schema: "metrics/1",
      duration_min: 3,
      ai_initiated_count: 2,
      cancel_count: 1,
      user_query_count: 1,
      deliveries_per_minute: 1,
    },
  };
}

export function runFinished(t: number): RunFinishedEvent {
  return { schema: SCHEMA, type: "RunFinished", t_ms: t, deliveries: 3 };
}

export function runAborted(t: number, error = "SessionFormatError: boom"): RunAbortedEvent {
  return { schema: SCHEMA, type: "RunAborted", t_ms: t, error };
}

export function basicRunPrefix(): ProtocolEvent[] {
  return [runStarted(0), stateChanged(0, true, false), frameTick(250)];
}
