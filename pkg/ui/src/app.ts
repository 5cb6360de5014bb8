/**
 * Browser entry point.  Connects to the experiment service, plots the
 * subscribed signals on a strip chart, shows the state machines, and
 * wires the control buttons.  Serve index.html from any static server
 * with the experiment service running on the same host.
 */

import { StripChart } from "./chart.js";
import { ExperimentClient } from "./session.js";

const $ = (id: string) => {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el;
};

const canvas = $("chart") as HTMLCanvasElement;
const chart = new StripChart(1200);

const statusEl = $("status");
const tickEl = $("tick");
const behindEl = $("behind");
const statesEl = $("states");
const pendingEl = $("pending");
const errorsEl = $("errors");

const url = `ws://${location.host}/experiment`;
const client = new ExperimentClient(url, (u) => new WebSocket(u), {
  onOpen() {
    statusEl.textContent = "connected";
  },
  onClose(willReconnect) {
    statusEl.textContent = willReconnect ? "reconnecting…" : "closed";
  },
  onSnapshot(snap) {
    tickEl.textContent = `tick ${snap.tick}  t=${snap.time.toFixed(2)}s`;
    behindEl.textContent = `${snap.behind_ms.toFixed(0)} ms behind`;
    for (const [name, value] of Object.entries(snap.signals)) {
      chart.push(name, snap.time, value);
    }
    chart.render(canvas);
    statesEl.textContent = Object.entries(snap.fsm_states)
      .map(([path, state]) => `${path}: ${state}`)
      .join("\n");
    pendingEl.textContent = client.pendingCommands.join(", ");
  },
  onAck() {
    pendingEl.textContent = client.pendingCommands.join(", ");
  },
  onError(err) {
    errorsEl.textContent = `${err.code}: ${err.message}`;
    pendingEl.textContent = client.pendingCommands.join(", ");
  },
});

$("pause").addEventListener("click", () => client.pause());
$("resume").addEventListener("click", () => client.resume());
$("step").addEventListener("click", () => client.step(1));
$("btn-mode").addEventListener("click", () =>
  client.injectMessage("root/system", "panel_in", "btn_mode"));
$("btn-fan").addEventListener("click", () =>
  client.injectMessage("root/system", "panel_in", "btn_fan"));

$("setpoint-apply").addEventListener("click", () => {
  const input = $("setpoint") as HTMLInputElement;
  const value = Number(input.value);
  if (Number.isFinite(value)) {
    client.setAttr("root/system/ctrl", "setpoint", value);
  }
});

$("speed").addEventListener("change", (ev) => {
  const value = Number((ev.target as HTMLSelectElement).value);
  if (value > 0) client.setSpeed(value);
});

client.connect();
