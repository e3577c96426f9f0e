// Canvas renderer: table, boxes, robot, and the intended/executed action
// vectors. No client-side prediction: only the last acknowledged view is
// drawn.

import type { SessionView, Vec2 } from "./protocol.js";

export interface Transform {
  scale: number; // px per metre
  cx: number;
  cy: number;
}

export function makeTransform(view: SessionView, w: number, h: number): Transform {
  const margin = 24;
  const scale = (Math.min(w, h) - 2 * margin) / (2 * view.table_half_extent);
  return { scale, cx: w / 2, cy: h / 2 };
}

export function toPx(t: Transform, p: Vec2): Vec2 {
  return [t.cx + p[0] * t.scale, t.cy - p[1] * t.scale];
}

/** Both vectors are drawn whenever they differ by more than one pixel at the
 * current render scale. */
export function vectorsDistinct(t: Transform, a: Vec2 | null, b: Vec2 | null, gain: number): boolean {
  if (!a || !b) return false;
  const dx = (a[0] - b[0]) * gain * t.scale;
  const dy = (a[1] - b[1]) * gain * t.scale;
  return Math.hypot(dx, dy) > 1;
}

const ACTION_DRAW_GAIN = 8; // seconds of travel represented by the arrow

function drawArrow(ctx: CanvasRenderingContext2D, t: Transform, from: Vec2, v: Vec2, color: string) {
  const tip: Vec2 = [from[0] + v[0] * ACTION_DRAW_GAIN, from[1] + v[1] * ACTION_DRAW_GAIN];
  const a = toPx(t, from);
  const b = toPx(t, tip);
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(a[0], a[1]);
  ctx.lineTo(b[0], b[1]);
  ctx.stroke();
  const ang = Math.atan2(b[1] - a[1], b[0] - a[0]);
  ctx.beginPath();
  ctx.moveTo(b[0], b[1]);
  ctx.lineTo(b[0] - 7 * Math.cos(ang - 0.4), b[1] - 7 * Math.sin(ang - 0.4));
  ctx.lineTo(b[0] - 7 * Math.cos(ang + 0.4), b[1] - 7 * Math.sin(ang + 0.4));
  ctx.closePath();
  ctx.fillStyle = color;
  ctx.fill();
}

export function render(ctx: CanvasRenderingContext2D, view: SessionView, w: number, h: number): void {
  const t = makeTransform(view, w, h);
  ctx.clearRect(0, 0, w, h);
  // table
  const half = view.table_half_extent * t.scale;
  ctx.fillStyle = "#f5efe0";
  ctx.strokeStyle = "#8a7a55";
  ctx.lineWidth = 2;
  ctx.fillRect(t.cx - half, t.cy - half, 2 * half, 2 * half);
  ctx.strokeRect(t.cx - half, t.cy - half, 2 * half, 2 * half);
  // boxes
  for (const box of view.boxes) {
    const p = toPx(t, box.pos);
    const s = box.half_size * t.scale;
    ctx.fillStyle = box.on_table ? "#c2543a" : "#d8cfc0";
    ctx.globalAlpha = box.on_table ? 1.0 : 0.45;
    ctx.fillRect(p[0] - s, p[1] - s, 2 * s, 2 * s);
    ctx.globalAlpha = 1.0;
  }
  // robot
  const r = toPx(t, view.robot);
  ctx.beginPath();
  ctx.arc(r[0], r[1], view.robot_radius * t.scale, 0, 2 * Math.PI);
  ctx.fillStyle = "#2b6f8a";
  ctx.fill();
  // action vectors: intended in blue, executed in orange when they differ
  if (view.intended) {
    drawArrow(ctx, t, view.robot, view.intended, "#1d4ed8");
  }
  if (view.executed && vectorsDistinct(t, view.intended, view.executed, ACTION_DRAW_GAIN)) {
    drawArrow(ctx, t, view.robot, view.executed, "#ea8c1f");
  }
}
