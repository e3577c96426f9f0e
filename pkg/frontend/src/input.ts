// Cursor (and keyboard fallback) to intended velocity commands.

import type { Vec2 } from "./protocol.js";

export function clampNorm(v: Vec2, limit: number): Vec2 {
  const speed = Math.hypot(v[0], v[1]);
  if (speed > limit && speed > 0) {
    const s = limit / speed;
    return [v[0] * s, v[1] * s];
  }
  return v;
}

/** intended = clamp(gain * (cursor - robot), limit), all in world units. */
export function pointerToAction(cursor: Vec2, robot: Vec2, gain: number, limit: number): Vec2 {
  const raw: Vec2 = [gain * (cursor[0] - robot[0]), gain * (cursor[1] - robot[1])];
  return clampNorm(raw, limit);
}

export interface KeyState {
  up: boolean;
  down: boolean;
  left: boolean;
  right: boolean;
}

export function emptyKeyState(): KeyState {
  return { up: false, down: false, left: false, right: false };
}

/** Arrow keys map to fixed-magnitude actions (accessibility fallback). */
export function keysToAction(keys: KeyState, limit: number): Vec2 | null {
  let x = 0;
  let y = 0;
  if (keys.left) x -= 1;
  if (keys.right) x += 1;
  if (keys.down) y -= 1;
  if (keys.up) y += 1;
  if (x === 0 && y === 0) return null;
  const n = Math.hypot(x, y);
  return [(x / n) * limit, (y / n) * limit];
}

export function applyKeyEvent(keys: KeyState, code: string, pressed: boolean): boolean {
  switch (code) {
    case "ArrowUp":
      keys.up = pressed;
      return true;
    case "ArrowDown":
      keys.down = pressed;
      return true;
    case "ArrowLeft":
      keys.left = pressed;
      return true;
    case "ArrowRight":
      keys.right = pressed;
      return true;
    default:
      return false;
  }
}
