// Gateway message schema (v1). Mirrors docs/gateway.md in the main repo.

export interface SceneObjectMsg {
  id: number;
  class: number;
  color: [number, number, number];
  shape: "sphere" | "box" | "cylinder";
  center?: [number, number, number];
  radius?: number;
  half_extents?: [number, number, number];
  base?: [number, number, number];
  height?: number;
}

export interface TwinMsg {
  pose: [number, number, number];
  joints: [number, number, number];
}

export interface Snapshot {
  v: number;
  type: "snapshot";
  tick: number;
  paused: boolean;
  dt1: TwinMsg;
  dt2: TwinMsg;
  robot: TwinMsg;
  force: { vector: [number, number, number]; magnitude: number };
  scale: { mode: string; factor: number };
  netem: { rtt_ms: number; jitter_ms: number; loss: number };
  fence: { lo: [number, number, number]; hi: [number, number, number] };
  home: { robot: [number, number, number]; operator: [number, number, number] };
  scene: { dt1: SceneObjectMsg[]; dt2: SceneObjectMsg[] };
  cloud: [number, number, number][];
  metrics: {
    bytes_pose: number;
    bytes_return: number;
    packets_pose: number;
    packets_return: number;
  };
}

export interface Ack {
  v: number;
  type: "ack";
  command?: string;
}

export interface ErrorMsg {
  v: number;
  type: "error";
  field: string;
  message: string;
}

export type ServerMessage = Snapshot | Ack | ErrorMsg;

export type Command =
  | { v: 1; type: "stylus-move"; position: [number, number, number]; close: boolean }
  | { v: 1; type: "set-scale"; mode: "macro" | "normal" | "micro" }
  | { v: 1; type: "set-netem"; rtt_ms: number; loss?: number; jitter_ms?: number }
  | { v: 1; type: "episode"; action: "start" | "pause" | "reset" };

export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as { v?: unknown; type?: unknown };
  if (m.v !== 1) return null;
  if (m.type === "snapshot" || m.type === "ack" || m.type === "error") {
    return msg as ServerMessage;
  }
  return null;
}
