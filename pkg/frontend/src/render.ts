// DOM view over UiState. mount() builds the static skeleton once; render()
// rewrites the dynamic regions from scratch on every call. All run content
// lands via textContent, never markup.

import type { ConnectionStatus } from "./socket.js";
import { shownMuted, type CardView, type UiState } from "./state.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface ViewOptions {
  // Turns a service frame path (/sessions/.../frames/000123.png) into a
  // fetchable URL; the app prefixes its base URL and auth token here.
  frameSrc: (file: string) => string;
}

export interface ControlElements {
  up: HTMLButtonElement;
  left: HTMLButtonElement;
  bottom: HTMLButtonElement;
  queryForm: HTMLFormElement;
  queryInput: HTMLInputElement;
}

export class View {
  private readonly banner: HTMLElement;
  private readonly runLabel: HTMLElement;
  private readonly systemIndicator: HTMLElement;
  private readonly muteIndicator: HTMLElement;
  private readonly frameImg: HTMLImageElement;
  private readonly overlay: SVGSVGElement;
  private readonly clock: HTMLElement;
  private readonly cardsHost: HTMLElement;
  private readonly ticker: HTMLElement;
  private readonly noteLine: HTMLElement;
  private readonly toast: HTMLElement;
  readonly controls: ControlElements;

  constructor(
    root: HTMLElement,
    private readonly opts: ViewOptions,
  ) {
    root.innerHTML = `
      <div class="banner" id="banner" hidden></div>
      <header class="topbar">
        <span id="run-label">no run</span>
        <span class="indicators">
          <span id="system-indicator" class="pill">assistant on</span>
          <span id="mute-indicator" class="pill" hidden>muted</span>
        </span>
      </header>
      <main class="stage">
        <div class="frame-wrap">
          <img id="frame" alt="first-person view" hidden>
          <svg id="overlay" viewBox="0 0 1 1" preserveAspectRatio="none"></svg>
          <div id="clock" class="clock"></div>
        </div>
        <aside id="cards" class="cards"></aside>
      </main>
      <div id="ticker" class="ticker" hidden></div>
      <footer class="controls">
        <button id="btn-up" title="cancel the current delivery">Up · cancel</button>
        <button id="btn-left" title="toggle audio mute">Left · mute</button>
        <button id="btn-bottom" title="toggle the proactive assistant">Bottom · on/off</button>
        <form id="query-form">
          <input id="query-input" placeholder="ask about the scene" autocomplete="off">
          <button id="btn-right" type="submit">Right · ask</button>
        </form>
        <span id="note-line" class="note"></span>
      </footer>
      <div id="toast" class="toast" hidden></div>
    `;
    const byId = <T extends Element>(id: string): T => {
      const el = root.querySelector(`#${id}`);
      if (el === null) {
        throw new Error(`missing element #${id}`);
      }
      return el as T;
    };
    this.banner = byId("banner");
    this.runLabel = byId("run-label");
    this.systemIndicator = byId("system-indicator");
    this.muteIndicator = byId("mute-indicator");
    this.frameImg = byId("frame");
    this.overlay = byId("overlay");
    this.clock = byId("clock");
    this.cardsHost = byId("cards");
    this.ticker = byId("ticker");
    this.noteLine = byId("note-line");
    this.toast = byId("toast");
    this.controls = {
      up: byId("btn-up"),
      left: byId("btn-left"),
      bottom: byId("btn-bottom"),
      queryForm: byId("query-form"),
      queryInput: byId("query-input"),
    };
  }

  render(state: UiState, status: ConnectionStatus): void {
    this.renderBanner(state, status);
    this.renderTopbar(state);
    this.renderFrame(state);
    this.renderCards(state);
    this.renderTicker(state);
    this.noteLine.textContent = this.noteText(state);
  }

  private renderBanner(state: UiState, status: ConnectionStatus): void {
    let text: string | null = null;
    if (status === "disconnected" || status === "connecting") {
      text = "connection lost, reconnecting";
    } else if (state.phase === "aborted") {
      text = `run aborted: ${state.abortError ?? "unknown error"}`;
    } else if (state.phase === "finished" || status === "finished") {
      text = "run finished";
    }
    this.banner.hidden = text === null;
    this.banner.textContent = text ?? "";
  }

  private renderTopbar(state: UiState): void {
    this.runLabel.textContent =
      state.runId === null
        ? "no run"
        : `${state.runId} · ${state.sessionId ?? "?"} · ${state.variant ?? "?"}`;
    this.systemIndicator.textContent = state.systemOn ? "assistant on" : "assistant off";
    this.systemIndicator.classList.toggle("off", !state.systemOn);
    this.muteIndicator.hidden = !shownMuted(state);
  }

  private renderFrame(state: UiState): void {
    if (state.frame === null) {
      this.frameImg.hidden = true;
      this.clock.textContent = "";
    } else {
      this.frameImg.hidden = false;
      const src = this.opts.frameSrc(state.frame.file);
      if (this.frameImg.getAttribute("src") !== src) {
        this.frameImg.setAttribute("src", src);
      }
      const seconds = (state.frame.tMs / 1000).toFixed(1);
      this.clock.textContent = `t ${seconds}s`;
    }
    this.renderOverlay(state);
  }

  private renderOverlay(state: UiState): void {
    while (this.overlay.firstChild !== null) {
      this.overlay.removeChild(this.overlay.firstChild);
    }
    for (const [x, y] of state.frame?.circles ?? []) {
      const circle = document.createElementNS(SVG_NS, "circle");
      circle.setAttribute("cx", String(x));
      circle.setAttribute("cy", String(y));
      circle.setAttribute("r", "0.02");
      circle.setAttribute("class", "gaze");
      this.overlay.appendChild(circle);
    }
    const newest = state.cards[0];
    if (newest === undefined) {
      return;
    }
    for (const item of newest.delivery.items) {
      for (const box of item.image?.boxes ?? []) {
        const rect = document.createElementNS(SVG_NS, "rect");
        rect.setAttribute("x", String(box.x));
        rect.setAttribute("y", String(box.y));
        rect.setAttribute("width", String(box.w));
        rect.setAttribute("height", String(box.h));
        rect.setAttribute("class", "box");
        this.overlay.appendChild(rect);
        const label = document.createElementNS(SVG_NS, "text");
        label.setAttribute("x", String(box.x));
        label.setAttribute("y", String(Math.max(box.y - 0.01, 0.03)));
        label.setAttribute("class", "box-label");
        label.textContent = box.entity;
        this.overlay.appendChild(label);
      }
    }
  }

  private renderCards(state: UiState): void {
    this.cardsHost.textContent = "";
    for (const card of state.cards) {
      this.cardsHost.appendChild(this.buildCard(card));
    }
  }

  private buildCard(card: CardView): HTMLElement {
    const { delivery } = card;
    const article = document.createElement("article");
    article.className = "card";
    article.dataset.deliveryId = delivery.id;

    const head = document.createElement("header");
    head.textContent = `${delivery.id} · ${delivery.trigger_kind}`;
    article.appendChild(head);

    for (const item of delivery.items) {
      const block = document.createElement("div");
      block.className = "item";
      const chips = document.createElement("div");
      chips.className = "chips";
      for (const [keyword, emoji] of item.keyword_emoji_pairs) {
        const chip = document.createElement("span");
        chip.className = "chip";
        chip.textContent = `${emoji} ${keyword}`;
        chips.appendChild(chip);
      }
      block.appendChild(chips);
      const kind = document.createElement("span");
      kind.className = "kind";
      kind.textContent = item.knowledge_type;
      block.appendChild(kind);
      article.appendChild(block);
    }
    if (delivery.audio_suppressed) {
      const mutedNote = document.createElement("span");
      mutedNote.className = "kind";
      mutedNote.textContent = "delivered silently";
      article.appendChild(mutedNote);
    }
    return article;
  }

  private renderTicker(state: UiState): void {
    const silent = shownMuted(state);
    if (state.transcript === null || silent) {
      this.ticker.hidden = true;
      this.ticker.textContent = "";
    } else {
      this.ticker.hidden = false;
      this.ticker.textContent = state.transcript.text;
    }
  }

  private noteText(state: UiState): string {
    const parts: string[] = [];
    if (state.lastNote !== null) {
      parts.push(state.lastNote);
    }
    if (state.metrics !== null) {
      const m = state.metrics;
      parts.push(
        `${m.ai_initiated_count} proactive, ${m.user_query_count} queries, ` +
          `${m.cancel_count} canceled, ${m.deliveries_per_minute.toFixed(2)}/min`,
      );
    }
    return parts.join(" · ");
  }

  showToast(text: string, forMs = 3000): void {
    this.toast.textContent = text;
    this.toast.hidden = false;
    setTimeout(() => {
      this.toast.hidden = true;
    }, forMs);
  }
}
