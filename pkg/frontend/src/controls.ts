// The four ring-mouse buttons plus the query box. Only mute flips the UI
// optimistically; cancel and on/off wait for the server's events, and a
// rejected press surfaces as a toast.

import { ApiError, type ServiceClient } from "./api.js";
import type { View } from "./render.js";
import { shownMuted, type UiState } from "./state.js";
import type { ButtonName } from "./types.js";

export interface ControlDeps {
  client: ServiceClient;
  runId: () => string | null;
  getState: () => UiState;
  setOptimisticMuted: (value: boolean | null) => void;
  rerender: () => void;
}

export function attachControls(view: View, deps: ControlDeps): void {
  const press = async (button: ButtonName, queryText?: string): Promise<void> => {
    const runId = deps.runId();
    if (runId === null) {
      view.showToast("no run connected");
      return;
    }
    try {
      await deps.client.pressButton(runId, button, queryText);
    } catch (err) {
      if (err instanceof ApiError) {
        view.showToast(`press failed: ${err.message}`);
      } else {
        view.showToast("press failed: network error");
      }
      throw err;
    }
  };
  const fireAndReport = (button: ButtonName, queryText?: string): void => {
    void press(button, queryText).catch(() => undefined);
  };

  view.controls.up.addEventListener("click", () => fireAndReport("Up"));
  view.controls.bottom.addEventListener("click", () => fireAndReport("Bottom"));

  view.controls.left.addEventListener("click", () => {
    deps.setOptimisticMuted(!shownMuted(deps.getState()));
    deps.rerender();
    void press("Left").catch(() => {
      deps.setOptimisticMuted(null);
      deps.rerender();
    });
  });

  view.controls.queryForm.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = view.controls.queryInput.value.trim();
    if (text === "") {
      view.showToast("type a question first");
      return;
    }
    view.controls.queryInput.value = "";
    fireAndReport("Right", text);
  });
}
