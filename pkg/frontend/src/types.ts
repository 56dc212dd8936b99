// Mirrors of the service's WebSocket event payloads. The engine owns these
// shapes; nothing here adds fields or logic.

export type ButtonName = "Up" | "Left" | "Bottom" | "Right";

export interface BoxPayload {
  entity: string;
  x: number;
  y: number;
  w: number;
  h: number;
  clamped: boolean;
}

export interface DeliveryImagePayload {
  chosen_frame_t_ms: number;
  frame_file: string | null;
  boxes: BoxPayload[];
}

export interface DeliveryItemPayload {
  content: string;
  knowledge_type: string;
  entities: string[];
  factors: Record<string, number> | null;
  factor_reasoning: Record<string, string> | null;
  total: number;
  max_history_sim: number;
  affinity: number;
  keyword_emoji_pairs: [string, string][];
  voiceover_text: string;
  image: DeliveryImagePayload | null;
}

export interface DeliveryPayload {
  schema: string;
  id: string;
  trigger_kind: string;
  trigger_t_ms: number;
  delivered_at_ms: number;
  canceled: boolean;
  audio_suppressed: boolean;
  items: DeliveryItemPayload[];
}

export interface MetricsPayload {
  schema: string;
  duration_min: number;
  ai_initiated_count: number;
  cancel_count: number;
  user_query_count: number;
  deliveries_per_minute: number;
}

interface TracedEvent {
  schema: string;
  type: string;
  t_ms: number;
}

export interface RunStartedEvent extends TracedEvent {
  type: "RunStarted";
  run_id: string;
  session_id: string;
  variant: string;
  duration_ms: number;
  frames: number;
}

export interface StateChangedEvent extends TracedEvent {
  type: "StateChanged";
  system_on: boolean;
  muted: boolean;
}

export interface FrameTickEvent extends TracedEvent {
  type: "FrameTick";
  frame_file: string;
  frame_t_ms: number;
  circles: [number, number][];
}

export interface TriggerFiredEvent extends TracedEvent {
  type: "Trigger";
  kind: string;
  trigger_t_ms: number;
  evidence_frames: number[];
}

export interface SuppressedEvent extends TracedEvent {
  type: "Suppressed";
  kind: string;
  reason: string;
}

export interface NoDeliveryEvent extends TracedEvent {
  type: "NoDelivery";
  reason: string;
  kind: string;
  detail?: string;
}

export interface ProviderErrorEvent extends TracedEvent {
  type: "ProviderError";
  stage: string;
  error: string;
  retrying?: boolean;
}

export interface ContextReadyEvent extends TracedEvent {
  type: "ContextReady";
  gaze_mode: string;
  activity: string;
  primary_entities: string[];
  peripheral_entities: string[];
}

export interface DeliveryEvent extends TracedEvent {
  type: "Delivery";
  delivery: DeliveryPayload;
}

export interface DeliveryDroppedEvent extends TracedEvent {
  type: "DeliveryDropped";
  reason: string;
  delivery_id: string;
}

export interface ButtonPressedEvent extends TracedEvent {
  type: "ButtonPressed";
  button: ButtonName;
  effect: string;
}

export interface CanceledEvent extends TracedEvent {
  type: "Canceled";
  delivery_id: string;
}

export interface MetricsEvent extends TracedEvent {
  type: "Metrics";
  metrics: MetricsPayload;
}

export interface RunFinishedEvent extends TracedEvent {
  type: "RunFinished";
  deliveries: number;
}

export interface RunAbortedEvent extends TracedEvent {
  type: "RunAborted";
  error: string;
}

export type ProtocolEvent =
  | RunStartedEvent
  | StateChangedEvent
  | FrameTickEvent
  | TriggerFiredEvent
  | SuppressedEvent
  | NoDeliveryEvent
  | ProviderErrorEvent
  | ContextReadyEvent
  | DeliveryEvent
  | DeliveryDroppedEvent
  | ButtonPressedEvent
  | CanceledEvent
  | MetricsEvent
  | RunFinishedEvent
  | RunAbortedEvent;

export interface WsMessage {
  cursor: number;
  event: ProtocolEvent;
}

export interface RunStatus {
  run_id: string;
  session_id: string;
  profile_id: string;
  state: "running" | "finished" | "aborted";
  error: string | null;
  events: number;
  deliveries: number;
  system_on: boolean | null;
  muted: boolean | null;
}
