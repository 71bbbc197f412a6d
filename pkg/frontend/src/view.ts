// Pure snapshot -> display-list construction. No client-side simulation:
// every coordinate in the output is copied from the latest snapshot, so the
// console can be closed and reopened without affecting episode truth.

import type { SceneObjectMsg, Snapshot } from "./protocol.js";

export type Plane = "top" | "side"; // top = (x, y), side = (x, z)

export type DisplayItem =
  | { kind: "circle"; id?: number; x: number; y: number; r: number; color: string; fill: boolean }
  | { kind: "rect"; id?: number; x0: number; y0: number; x1: number; y1: number; color: string; fill: boolean }
  | { kind: "segment"; x0: number; y0: number; x1: number; y1: number; color: string; width: number }
  | { kind: "points"; pts: [number, number][]; color: string };

export interface PanelView {
  plane: Plane;
  items: DisplayItem[];
}

export interface Panel {
  name: "dt1" | "remote" | "overlay";
  views: PanelView[];
}

export interface DisplayList {
  panels: Panel[];
  tickers: string[];
}

const ARM_COLOR = "#8892a0";
const TARGET_COLOR = "#30c048"; // the green target marker the operator drags
const ROBOT_COLOR = "#e0a030";
const CLOUD_COLOR = "#e04048";
const FENCE_COLOR = "#4060a0";

function css(color: [number, number, number]): string {
  return `rgb(${color[0]},${color[1]},${color[2]})`;
}

function projectPoint(p: [number, number, number], plane: Plane): [number, number] {
  return plane === "top" ? [p[0], p[1]] : [p[0], p[2]];
}

export function objectItem(o: SceneObjectMsg, plane: Plane): DisplayItem {
  const color = css(o.color);
  if (o.shape === "sphere") {
    const [x, y] = projectPoint(o.center!, plane);
    return { kind: "circle", id: o.id, x, y, r: o.radius!, color, fill: true };
  }
  if (o.shape === "box") {
    const [x, y] = projectPoint(o.center!, plane);
    const he = o.half_extents!;
    const [hx, hy] = plane === "top" ? [he[0], he[1]] : [he[0], he[2]];
    return { kind: "rect", id: o.id, x0: x - hx, y0: y - hy, x1: x + hx, y1: y + hy, color, fill: true };
  }
  // cylinder: disk from above, silhouette rectangle from the side
  const b = o.base!;
  if (plane === "top") {
    return { kind: "circle", id: o.id, x: b[0], y: b[1], r: o.radius!, color, fill: true };
  }
  return {
    kind: "rect",
    id: o.id,
    x0: b[0] - o.radius!,
    y0: b[2],
    x1: b[0] + o.radius!,
    y1: b[2] + o.height!,
    color,
    fill: true,
  };
}

function fenceItem(snap: Snapshot, plane: Plane): DisplayItem {
  const [x0, y0] = projectPoint(snap.fence.lo, plane);
  const [x1, y1] = projectPoint(snap.fence.hi, plane);
  return { kind: "rect", x0, y0, x1, y1, color: FENCE_COLOR, fill: false };
}

function armItems(tip: [number, number, number], plane: Plane, color: string): DisplayItem[] {
  const [tx, ty] = projectPoint(tip, plane);
  const [bx, by] = projectPoint([0, 0, 0], plane);
  return [
    { kind: "segment", x0: bx, y0: by, x1: tx, y1: ty, color, width: 3 },
    { kind: "circle", x: tx, y: ty, r: 0.006, color, fill: true },
  ];
}

function buildView(snap: Snapshot, name: Panel["name"], plane: Plane): PanelView {
  const items: DisplayItem[] = [fenceItem(snap, plane)];
  if (name === "dt1") {
    for (const o of snap.scene.dt1) items.push(objectItem(o, plane));
    items.push(...armItems(snap.dt1.pose, plane, ARM_COLOR));
    const [gx, gy] = projectPoint(snap.dt1.pose, plane);
    items.push({ kind: "circle", x: gx, y: gy, r: 0.008, color: TARGET_COLOR, fill: false });
  } else {
    for (const o of snap.scene.dt2) items.push(objectItem(o, plane));
    items.push(...armItems(snap.robot.pose, plane, ROBOT_COLOR));
    const [dx, dy] = projectPoint(snap.dt2.pose, plane);
    items.push({ kind: "circle", x: dx, y: dy, r: 0.005, color: ARM_COLOR, fill: false });
  }
  if (name === "overlay") {
    items.push({
      kind: "points",
      pts: snap.cloud.map((p) => projectPoint(p, plane)),
      color: CLOUD_COLOR,
    });
  }
  return { plane, items };
}

export function buildPanels(snap: Snapshot): DisplayList {
  const panels: Panel[] = (["dt1", "remote", "overlay"] as const).map((name) => ({
    name,
    views: [buildView(snap, name, "top"), buildView(snap, name, "side")],
  }));
  const m = snap.metrics;
  const tickers = [
    `${snap.scale.mode} ${snap.scale.factor}:1`,
    `rtt ${snap.netem.rtt_ms} ms  loss ${(snap.netem.loss * 100).toFixed(1)}%`,
    `force ${snap.force.magnitude.toFixed(2)} N`,
    `pose ${m.bytes_pose} B / return ${m.bytes_return} B`,
    `t ${snap.tick.toFixed(2)} s${snap.paused ? "  [paused]" : ""}`,
  ];
  return { panels, tickers };
}
