/**
 * Canvas renderer: links drawn as bars between their tip positions under an
 * orbitable weak-perspective projection.  Selected links are highlighted and
 * detached connectors (activation 0) are drawn hollow.
 */

import { LinkView, SnapshotView } from "./snapshot.js";

export interface Camera {
  yaw: number; // radians around +z
  pitch: number; // radians above the horizon
  distance: number;
  cx: number;
  cy: number;
  cz: number;
}

/** Profile view preset: looking across the stages from the side. */
export function defaultCamera(): Camera {
  return { yaw: Math.PI / 2 + 0.5, pitch: 0.35, distance: 2.2, cx: 0, cy: 0, cz: 0.1 };
}

export function project(camera: Camera, p: [number, number, number], w: number, h: number): [number, number, number] {
  const [x, y, z] = [p[0] - camera.cx, p[1] - camera.cy, p[2] - camera.cz];
  const cy = Math.cos(camera.yaw), sy = Math.sin(camera.yaw);
  const cp = Math.cos(camera.pitch), sp = Math.sin(camera.pitch);
  const rx = cy * x + sy * y;
  const ry = -sy * x + cy * y;
  const vz = cp * ry + sp * z; // depth axis
  const vy = -sp * ry + cp * z;
  const scale = (h * 0.8) / camera.distance;
  return [w / 2 + rx * scale, h * 0.62 - vy * scale, vz];
}

export interface RenderState {
  snapshot: SnapshotView | null;
  selection: Set<number>;
  error: string | null;
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  state: RenderState,
  camera: Camera,
  w: number,
  h: number,
): void {
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, w, h);
  drawGrid(ctx, camera, w, h);
  const snap = state.snapshot;
  if (!snap) return;

  const ordered = [...snap.links].sort((a, b) => a.id - b.id);
  ordered.forEach((link, index) => {
    const ordinal = index + 1;
    drawLink(ctx, camera, link, state.selection.has(ordinal), w, h);
  });

  ctx.fillStyle = "#9fb4c7";
  ctx.font = "13px monospace";
  ctx.fillText(`t = ${snap.sim_time.toFixed(1)} s`, 12, 20);
  const names = snap.morphology.names.length
    ? snap.morphology.names.join(", ")
    : "(no catalog match)";
  ctx.fillText(`morphology: ${names}`, 12, 38);
  ctx.fillText(`hash: ${snap.morphology.hash.slice(0, 16)}…`, 12, 56);
  if (state.error) {
    ctx.fillStyle = "#ff6b6b";
    ctx.fillText(state.error, 12, h - 16);
  }
}

function drawGrid(ctx: CanvasRenderingContext2D, camera: Camera, w: number, h: number): void {
  ctx.strokeStyle = "#223041";
  ctx.lineWidth = 1;
  for (let gx = -2; gx <= 2; gx += 0.25) {
    path(ctx, camera, [gx, -2, 0], [gx, 2, 0], w, h);
    path(ctx, camera, [-2, gx, 0], [2, gx, 0], w, h);
  }
}

function path(ctx: CanvasRenderingContext2D, camera: Camera, a: [number, number, number], b: [number, number, number], w: number, h: number): void {
  const pa = project(camera, a, w, h);
  const pb = project(camera, b, w, h);
  ctx.beginPath();
  ctx.moveTo(pa[0], pa[1]);
  ctx.lineTo(pb[0], pb[1]);
  ctx.stroke();
}

function drawLink(
  ctx: CanvasRenderingContext2D,
  camera: Camera,
  link: LinkView,
  selected: boolean,
  w: number,
  h: number,
): void {
  const pa = project(camera, link.a, w, h);
  const pb = project(camera, link.b, w, h);
  ctx.strokeStyle = selected ? "#ffd166" : "#4ecdc4";
  ctx.lineWidth = selected ? 5 : 3;
  ctx.beginPath();
  ctx.moveTo(pa[0], pa[1]);
  ctx.lineTo(pb[0], pb[1]);
  ctx.stroke();
  drawTip(ctx, pa, link.act[0]);
  drawTip(ctx, pb, link.act[1]);
  const mid = project(camera, link.center, w, h);
  ctx.fillStyle = "#9fb4c7";
  ctx.font = "11px monospace";
  ctx.fillText(String(link.id), mid[0] + 6, mid[1] - 6);
}

function drawTip(ctx: CanvasRenderingContext2D, p: [number, number, number], activation: number): void {
  ctx.beginPath();
  ctx.arc(p[0], p[1], 5, 0, 2 * Math.PI);
  if (activation > 0.5) {
    ctx.fillStyle = "#ef476f";
    ctx.fill();
  } else {
    ctx.strokeStyle = "#ef476f"; // retracted connector drawn hollow
    ctx.lineWidth = 2;
    ctx.stroke();
  }
}
