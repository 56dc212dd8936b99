// Browser entry point. URL parameters pick the service and run:
//   ?api=http://localhost:8000   service base URL (default: page origin)
//   ?token=...                   static bearer token, when the service has one
//   ?run=r0001                   connect straight to an existing run

import { ApiError, ServiceClient } from "./api.js";
import { App } from "./app.js";

function option(select: HTMLSelectElement, value: string): void {
  const el = document.createElement("option");
  el.value = value;
  el.textContent = value;
  select.appendChild(el);
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = (params.get("api") ?? window.location.origin).replace(/\/$/, "");
  const client = new ServiceClient(base, params.get("token"));

  const setup = document.getElementById("setup");
  const live = document.getElementById("live");
  if (setup === null || live === null) {
    throw new Error("page skeleton missing #setup or #live");
  }
  setup.innerHTML = `
    <form id="start-form">
      <label>session <select id="session-select"></select></label>
      <label>profile <select id="profile-select"></select></label>
      <label>pace
        <select id="pace-select">
          <option value="realtime">realtime</option>
          <option value="fast">fast</option>
        </select>
      </label>
      <label>speed <input id="speed-input" type="number" value="10" min="1" step="1"></label>
      <button type="submit">start run</button>
    </form>
    <form id="connect-form">
      <label>run id <input id="run-input" placeholder="r0001"></label>
      <button type="submit">connect</button>
    </form>
    <span id="setup-error" class="note"></span>
  `;

  const app = new App({ root: live, client });
  const sessionSelect = setup.querySelector("#session-select") as HTMLSelectElement;
  const profileSelect = setup.querySelector("#profile-select") as HTMLSelectElement;
  const paceSelect = setup.querySelector("#pace-select") as HTMLSelectElement;
  const speedInput = setup.querySelector("#speed-input") as HTMLInputElement;
  const runInput = setup.querySelector("#run-input") as HTMLInputElement;
  const errorLine = setup.querySelector("#setup-error") as HTMLElement;

  const report = (err: unknown): void => {
    errorLine.textContent =
      err instanceof ApiError ? err.message : "service unreachable";
  };

  try {
    for (const id of await client.listSessions()) {
      option(sessionSelect, id);
    }
    for (const id of await client.listProfiles()) {
      option(profileSelect, id);
    }
  } catch (err) {
    report(err);
  }

  setup.querySelector("#start-form")?.addEventListener("submit", (ev) => {
    ev.preventDefault();
    errorLine.textContent = "";
    const body = {
      session_id: sessionSelect.value,
      profile_id: profileSelect.value,
      pace: paceSelect.value,
      speed: Number(speedInput.value) || 1,
    };
    app
      .startRun(body)
      .then(() => {
        setup.hidden = true;
      })
      .catch(report);
  });

  setup.querySelector("#connect-form")?.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const runId = runInput.value.trim();
    if (runId === "") {
      return;
    }
    app.connect(runId);
    setup.hidden = true;
  });

  const autoRun = params.get("run");
  if (autoRun !== null) {
    app.connect(autoRun);
    setup.hidden = true;
  }
}

void boot();
