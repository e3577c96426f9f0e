// DOM wiring: canvas, pointer/keyboard input, session controls, status line.

import { applyKeyEvent, emptyKeyState, keysToAction, pointerToAction } from "./input.js";
import { BridgeClient, SessionView, Vec2 } from "./protocol.js";
import { makeTransform, render } from "./render.js";
import { SessionDriver } from "./session.js";

const POINTER_GAIN = 2.0; // (m/s) per metre of cursor offset

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setup(): void {
  const canvas = el<HTMLCanvasElement>("world");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");
  const status = el<HTMLDivElement>("status");
  const banner = el<HTMLDivElement>("banner");
  const hud = el<HTMLDivElement>("hud");

  const client = new BridgeClient("");
  let latest: SessionView | null = null;
  let cursorWorld: Vec2 | null = null;
  const keys = emptyKeyState();

  const driver = new SessionDriver(client, {
    onView(view) {
      latest = view;
      render(ctx, view, canvas.width, canvas.height);
      hud.textContent =
        `tick ${view.tick}/${view.horizon}  score ${view.score}  ` +
        `sigma2 ${view.sigma2.toExponential(2)}  status ${view.status}`;
    },
    onStatus(text, isError) {
      status.textContent = text;
      banner.style.display = isError ? "block" : "none";
      banner.textContent = isError ? text : "";
    },
  });

  driver.setIntentSource((): Vec2 => {
    if (!latest) return [0, 0];
    const keyAction = keysToAction(keys, latest.action_limit);
    if (keyAction) return keyAction;
    if (!cursorWorld) return [0, 0];
    return pointerToAction(cursorWorld, latest.robot, POINTER_GAIN, latest.action_limit);
  });

  canvas.addEventListener("pointermove", (ev) => {
    if (!latest) return;
    const rect = canvas.getBoundingClientRect();
    const t = makeTransform(latest, canvas.width, canvas.height);
    const px = ((ev.clientX - rect.left) * canvas.width) / rect.width;
    const py = ((ev.clientY - rect.top) * canvas.height) / rect.height;
    cursorWorld = [(px - t.cx) / t.scale, (t.cy - py) / t.scale];
  });
  canvas.addEventListener("pointerleave", () => {
    cursorWorld = null;
  });
  window.addEventListener("keydown", (ev) => {
    if (applyKeyEvent(keys, ev.code, true)) ev.preventDefault();
  });
  window.addEventListener("keyup", (ev) => {
    if (applyKeyEvent(keys, ev.code, false)) ev.preventDefault();
  });

  el<HTMLButtonElement>("start").addEventListener("click", () => {
    const seed = Number(el<HTMLInputElement>("seed").value) || 0;
    void driver.start({ seed }).catch((err) => {
      status.textContent = `start failed: ${String(err)}`;
      banner.style.display = "block";
      banner.textContent = "server unreachable";
    });
  });
  el<HTMLButtonElement>("accept").addEventListener("click", () => void driver.finish(true));
  el<HTMLButtonElement>("discard").addEventListener("click", () => void driver.finish(false));

  void client
    .info()
    .then((info) => {
      status.textContent = `bridge ready (sigma2 ${info.sigma2.toExponential(2)}, ` +
        `${info.tick_rate} Hz)`;
    })
    .catch(() => {
      banner.style.display = "block";
      banner.textContent = "demo bridge unreachable";
    });
}

window.addEventListener("DOMContentLoaded", setup);
