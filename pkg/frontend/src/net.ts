// WebSocket client wrapper. Observers never send commands; a disconnected
// client freezes the last frame and retries.

import { parseServerMessage, type Command, type ServerMessage, type Snapshot } from "./protocol.js";

export type Role = "observer" | "operator";

export interface NetEvents {
  onSnapshot(snap: Snapshot): void;
  onStatus(status: "connecting" | "connected" | "disconnected" | "rejected"): void;
  onError(field: string, message: string): void;
}

export class GatewayClient {
  private ws: WebSocket | null = null;
  private connected = false;

  constructor(
    private url: string,
    private role: Role,
    private events: NetEvents,
    private reconnectDelayMs = 1000,
  ) {}

  connect(): void {
    this.events.onStatus("connecting");
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      ws.send(JSON.stringify({ v: 1, role: this.role }));
    };
    ws.onmessage = (event: MessageEvent) => {
      const msg = parseServerMessage(String(event.data));
      if (msg === null) return;
      this.dispatch(msg);
    };
    ws.onclose = () => {
      const wasConnected = this.connected;
      this.connected = false;
      this.events.onStatus("disconnected");
      if (wasConnected) setTimeout(() => this.connect(), this.reconnectDelayMs);
    };
    ws.onerror = () => {
      /* onclose follows */
    };
  }

  private dispatch(msg: ServerMessage): void {
    if (msg.type === "snapshot") {
      this.events.onSnapshot(msg);
      return;
    }
    if (msg.type === "ack") {
      if (!this.connected) {
        this.connected = true;
        this.events.onStatus("connected");
      }
      return;
    }
    if (msg.field === "role" && !this.connected) {
      this.events.onStatus("rejected");
      return;
    }
    this.events.onError(msg.field, msg.message);
  }

  /** Sends a command; observers are hard-blocked client-side. */
  send(cmd: Command): boolean {
    if (this.role !== "operator") return false;
    if (this.ws === null || this.ws.readyState !== WebSocket.OPEN) return false;
    this.ws.send(JSON.stringify(cmd));
    return true;
  }

  close(): void {
    this.ws?.close();
    this.ws = null;
  }
}
