import { describe, expect, it } from "vitest";

import { apply, initialState, replay, shownMuted, MAX_CARD_ITEMS } from "../src/state.js";
import type { ProtocolEvent } from "../src/types.js";
import {
  basicRunPrefix,
  canceled,
  delivery,
  frameTick,
  item,
  metricsEvent,
  runAborted,
  runFinished,
  runStarted,
  stateChanged,
} from "./protocol.js";

describe("reducer", () => {
  it("run start fills identity and phase", () => {
    const state = replay([runStarted(0, "lakeside.r0007")]);
    expect(state.phase).toBe("running");
    expect(state.runId).toBe("lakeside.r0007");
    expect(state.sessionId).toBe("fixture");
    expect(state.variant).toBe("full");
  });

  it("frame ticks replace the frame view", () => {
    const state = replay([
      frameTick(250, "/sessions/s/frames/000001.png", [[0.3, 0.4]]),
      frameTick(500, "/sessions/s/frames/000002.png", []),
    ]);
    expect(state.frame).toEqual({ file: "/sessions/s/frames/000002.png", tMs: 500, circles: [] });
    expect(state.tMs).toBe(500);
  });

  it("a delivery becomes the newest card and feeds the transcript", () => {
    const state = replay([...basicRunPrefix(), delivery("d0001", 16_000)]);
    expect(state.cards.map((c) => c.delivery.id)).toEqual(["d0001"]);
    expect(state.transcript?.deliveryId).toBe("d0001");
    expect(state.transcript?.text).toContain("steam era");
  });

  it("cards carry at most two items even from an oversized payload", () => {
    const oversized = delivery("d0001", 16_000, {
      items: [item(), item(), item({ content: "third" })],
    });
    const state = replay([oversized]);
    expect(state.cards[0]!.delivery.items).toHaveLength(MAX_CARD_ITEMS);
  });

  it("a silent delivery shows a card but leaves the transcript alone", () => {
    const state = replay([
      delivery("d0001", 16_000),
      delivery("d0002", 30_000, { audioSuppressed: true }),
    ]);
    expect(state.cards).toHaveLength(2);
    expect(state.transcript?.deliveryId).toBe("d0001");
  });

  it("cancel removes exactly the named card and silences its transcript", () => {
    const state = replay([
      delivery("d0001", 16_000),
      delivery("d0002", 30_000),
      canceled(31_000, "d0002"),
    ]);
    expect(state.cards.map((c) => c.delivery.id)).toEqual(["d0001"]);
    expect(state.transcript).toBeNull();
  });

  it("cancel of an older card keeps the newer transcript", () => {
    const state = replay([
      delivery("d0001", 16_000),
      delivery("d0002", 30_000),
      canceled(31_000, "d0001"),
    ]);
    expect(state.cards.map((c) => c.delivery.id)).toEqual(["d0002"]);
    expect(state.transcript?.deliveryId).toBe("d0002");
  });

  it("state changes settle the optimistic mute", () => {
    let state = initialState();
    state = { ...state, optimisticMuted: true };
    expect(shownMuted(state)).toBe(true);
    state = apply(state, stateChanged(5_000, true, true));
    expect(state.optimisticMuted).toBeNull();
    expect(shownMuted(state)).toBe(true);
    state = apply(state, stateChanged(6_000, false, false));
    expect(state.systemOn).toBe(false);
    expect(shownMuted(state)).toBe(false);
  });

  it("metrics, finish, and abort are reflected", () => {
    const finished = replay([...basicRunPrefix(), metricsEvent(180_000), runFinished(180_000)]);
    expect(finished.phase).toBe("finished");
    expect(finished.metrics?.cancel_count).toBe(1);
    const aborted = replay([...basicRunPrefix(), runAborted(40_000)]);
    expect(aborted.phase).toBe("aborted");
    expect(aborted.abortError).toContain("boom");
  });

  it("replaying the same event log lands in the same state", () => {
    const events: ProtocolEvent[] = [
      ...basicRunPrefix(),
      delivery("d0001", 16_000),
      stateChanged(20_000, true, true),
      delivery("d0002", 30_000, { audioSuppressed: true }),
      canceled(31_000, "d0001"),
      frameTick(32_000),
      metricsEvent(60_000),
      runFinished(60_000),
    ];
    expect(replay(events)).toEqual(replay(events));
  });

  it("chunked application equals one-shot replay", () => {
    const events: ProtocolEvent[] = [
      ...basicRunPrefix(),
      delivery("d0001", 16_000),
      canceled(17_000, "d0001"),
      delivery("d0002", 30_000),
      runFinished(60_000),
    ];
    let chunked = initialState();
    for (const event of events) {
      chunked = apply(chunked, event);
    }
    expect(chunked).toEqual(replay(events));
  });

  it("events do not mutate prior states", () => {
    const first = replay([delivery("d0001", 16_000)]);
    const snapshot = JSON.stringify(first);
    apply(first, canceled(17_000, "d0001"));
    apply(first, frameTick(18_000));
    expect(JSON.stringify(first)).toBe(snapshot);
  });
});
