// Console entry point: wires the gateway client, the display-list builder,
// and pointer/keyboard input onto three canvas panels.

import { GatewayClient } from "./net.js";
import { InputMapper, type WorkspaceRect } from "./input.js";
import { buildPanels, type DisplayItem, type PanelView } from "./view.js";
import type { Snapshot } from "./protocol.js";

const PANEL_W = 360;
const TOP_H = 300;
const SIDE_H = 180;

interface Viewport {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  px: number;
  py: number;
  pw: number;
  ph: number;
}

function viewportFor(snap: Snapshot, plane: "top" | "side", py: number, ph: number): Viewport {
  const lo = snap.fence.lo;
  const hi = snap.fence.hi;
  const pad = 0.04;
  if (plane === "top") {
    return { x0: lo[0] - pad, y0: lo[1] - pad, x1: hi[0] + pad, y1: hi[1] + pad, px: 0, py, pw: PANEL_W, ph };
  }
  return { x0: lo[0] - pad, y0: -0.01, x1: hi[0] + pad, y1: hi[2] + pad, px: 0, py, pw: PANEL_W, ph };
}

function toPx(v: Viewport, x: number, y: number): [number, number] {
  const sx = v.px + ((x - v.x0) / (v.x1 - v.x0)) * v.pw;
  const sy = v.py + v.ph - ((y - v.y0) / (v.y1 - v.y0)) * v.ph;
  return [sx, sy];
}

function scale(v: Viewport, r: number): number {
  return (r / (v.x1 - v.x0)) * v.pw;
}

function drawItem(ctx: CanvasRenderingContext2D, v: Viewport, item: DisplayItem): void {
  ctx.strokeStyle = ctx.fillStyle = item.kind === "points" ? item.color : item.color;
  if (item.kind === "circle") {
    const [x, y] = toPx(v, item.x, item.y);
    ctx.beginPath();
    ctx.arc(x, y, Math.max(1.5, scale(v, item.r)), 0, 2 * Math.PI);
    item.fill ? ctx.fill() : ctx.stroke();
  } else if (item.kind === "rect") {
    const [x0, y0] = toPx(v, item.x0, item.y1);
    const [x1, y1] = toPx(v, item.x1, item.y0);
    item.fill ? ctx.fillRect(x0, y0, x1 - x0, y1 - y0) : ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
  } else if (item.kind === "segment") {
    ctx.lineWidth = item.width;
    const [x0, y0] = toPx(v, item.x0, item.y0);
    const [x1, y1] = toPx(v, item.x1, item.y1);
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
    ctx.lineWidth = 1;
  } else {
    for (const [x, y] of item.pts) {
      const [sx, sy] = toPx(v, x, y);
      ctx.fillRect(sx - 1, sy - 1, 2, 2);
    }
  }
}

function drawView(ctx: CanvasRenderingContext2D, snap: Snapshot, view: PanelView, py: number, ph: number): void {
  const v = viewportFor(snap, view.plane, py, ph);
  for (const item of view.items) drawItem(ctx, v, item);
}

function main(): void {
  const params = new URLSearchParams(location.search);
  const url = params.get("ws") ?? "ws://127.0.0.1:8765";
  const role = (params.get("role") ?? "operator") as "operator" | "observer";

  const canvases = ["dt1", "remote", "overlay"].map((name) => {
    const c = document.getElementById(`panel-${name}`) as HTMLCanvasElement;
    c.width = PANEL_W;
    c.height = TOP_H + SIDE_H;
    return c;
  });
  const tickerEl = document.getElementById("tickers") as HTMLElement;
  const statusEl = document.getElementById("status") as HTMLElement;

  let latest: Snapshot | null = null;
  const mapper = new InputMapper();

  function redraw(): void {
    if (latest === null) return;
    const dl = buildPanels(latest);
    dl.panels.forEach((panel, i) => {
      const ctx = canvases[i].getContext("2d")!;
      ctx.fillStyle = "#14161a";
      ctx.fillRect(0, 0, PANEL_W, TOP_H + SIDE_H);
      drawView(ctx, latest!, panel.views[0], 0, TOP_H);
      drawView(ctx, latest!, panel.views[1], TOP_H, SIDE_H);
    });
    tickerEl.textContent = dl.tickers.join("   |   ");
  }

  const client = new GatewayClient(url, role, {
    onSnapshot(snap) {
      const scaleChanged = latest !== null && latest.scale.mode !== snap.scale.mode;
      latest = snap;
      mapper.syncFromSnapshot(snap);
      if (scaleChanged) mapper.onScaleChanged(snap, lastStylus);
      redraw();
    },
    onStatus(status) {
      statusEl.textContent = status === "connected" ? `${role} connected` : status;
      statusEl.className = status;
      // on disconnect the last frame stays on screen under the banner
    },
    onError(field, message) {
      statusEl.textContent = `error ${field}: ${message}`;
    },
  });
  client.connect();

  let lastStylus: [number, number, number] | null = null;
  const dt1Canvas = canvases[0];
  dt1Canvas.addEventListener("pointermove", (ev) => {
    if (latest === null) return;
    const bounds = dt1Canvas.getBoundingClientRect();
    const rect: WorkspaceRect = { left: bounds.left, top: bounds.top, width: bounds.width, height: (bounds.height * TOP_H) / (TOP_H + SIDE_H) };
    const cmd = mapper.pointerMove(ev.clientX, ev.clientY, rect, latest, performance.now());
    if (cmd !== null && client.send(cmd) && cmd.type === "stylus-move") {
      lastStylus = cmd.position;
    }
  });
  dt1Canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    mapper.scroll(ev.deltaY < 0 ? 1 : -1);
  });
  window.addEventListener("keydown", (ev) => {
    if (latest === null) return;
    const cmd = mapper.keyPress(ev.key, latest, performance.now());
    if (cmd !== null && client.send(cmd) && cmd.type === "stylus-move") {
      lastStylus = cmd.position;
    }
    if (ev.key === "1") client.send({ v: 1, type: "set-scale", mode: "macro" });
    if (ev.key === "2") client.send({ v: 1, type: "set-scale", mode: "normal" });
    if (ev.key === "3") client.send({ v: 1, type: "set-scale", mode: "micro" });
  });
}

main();
