/**
 * Teleoperation panel: live 3D link view plus the keyboard grammar, with
 * on-screen buttons duplicating every preset.  Keyboard chords are captured
 * from held keys and sent to the bridge verbatim; the server-side parser is
 * authoritative, the local parse only drives the command log and selection
 * highlight.
 */

import { parseTeleop } from "./grammar.js";
import { BridgeConnection } from "./net.js";
import { Camera, defaultCamera, drawScene, RenderState } from "./render.js";
import { keysMessage, parseSnapshot, SchemaMismatch } from "./snapshot.js";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const logPane = document.getElementById("log") as HTMLElement;
const statusPane = document.getElementById("status") as HTMLElement;

const state: RenderState = { snapshot: null, selection: new Set(), error: null };
const camera: Camera = defaultCamera();
let crawlMode = false;

const wsUrl = new URLSearchParams(location.search).get("ws")
  ?? `ws://${location.hostname || "127.0.0.1"}:9701`;
const bridge = new BridgeConnection(wsUrl);

bridge.onStatus = (connected) => {
  statusPane.textContent = connected ? `connected: ${wsUrl}` : "disconnected…";
  statusPane.className = connected ? "ok" : "bad";
};

bridge.onText = (text) => {
  try {
    state.snapshot = parseSnapshot(text);
    state.error = null;
  } catch (err) {
    if (err instanceof SchemaMismatch) {
      state.error = String(err.message); // banner; stop updating the scene
    }
    // other malformed messages: keep the previous frame
  }
};

const held = new Set<string>();

function sendChord(keys: string[]): void {
  const command = parseTeleop(keys, crawlMode);
  if (command.action === "crawl_mode_toggle") crawlMode = !crawlMode;
  state.selection = new Set(command.selection);
  bridge.send(keysMessage(keys));
  logCommand(keys, command.action);
}

function logCommand(keys: string[], action: string): void {
  const line = document.createElement("div");
  line.textContent = `[${keys.join("+")}] → ${action}${crawlMode ? " (crawl mode)" : ""}`;
  logPane.prepend(line);
  while (logPane.childElementCount > 40) logPane.lastElementChild?.remove();
}

window.addEventListener("keydown", (event) => {
  if (event.repeat) return;
  held.add(event.key);
  sendChord([...held]);
  if (["ArrowUp", "ArrowDown", "ArrowLeft", "ArrowRight", "/", "*"].includes(event.key)) {
    event.preventDefault();
  }
});

window.addEventListener("keyup", (event) => {
  held.delete(event.key);
});

// on-screen preset buttons duplicate the full cheat sheet
document.querySelectorAll<HTMLButtonElement>("button[data-keys]").forEach((button) => {
  button.addEventListener("click", () => {
    sendChord(button.dataset.keys!.split(" "));
  });
});

// orbit controls
let dragging = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("mousedown", (e) => {
  dragging = true;
  lastX = e.clientX;
  lastY = e.clientY;
});
window.addEventListener("mouseup", () => (dragging = false));
window.addEventListener("mousemove", (e) => {
  if (!dragging) return;
  camera.yaw += (e.clientX - lastX) * 0.01;
  camera.pitch = Math.min(1.4, Math.max(-0.2, camera.pitch + (e.clientY - lastY) * 0.01));
  lastX = e.clientX;
  lastY = e.clientY;
});
canvas.addEventListener("wheel", (e) => {
  camera.distance = Math.min(8, Math.max(0.5, camera.distance * (e.deltaY > 0 ? 1.1 : 0.9)));
  e.preventDefault();
});

function frame(): void {
  if (state.snapshot) {
    // keep the structure centered
    const links = state.snapshot.links;
    if (links.length) {
      let sx = 0, sy = 0;
      for (const link of links) {
        sx += (link.a[0] + link.b[0]) / 2;
        sy += (link.a[1] + link.b[1]) / 2;
      }
      camera.cx = sx / links.length;
      camera.cy = sy / links.length;
    }
  }
  drawScene(ctx, state, camera, canvas.width, canvas.height);
  requestAnimationFrame(frame);
}

bridge.connect();
requestAnimationFrame(frame);
