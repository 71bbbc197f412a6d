// Pointer/keyboard -> stylus commands. The workspace rectangle drawn on the
// canvas is the geofence's top view; a click there names a robot-frame
// target, which maps into the stylus frame through the calibration anchors
// (scale-aware, mirroring the server's rebase-on-scale-switch rule).

import type { Command, Snapshot } from "./protocol.js";

export const COMMAND_RATE_HZ = 120;
export const SCROLL_STEP_M = 0.001; // one wheel tick = 1 mm of robot z

export interface WorkspaceRect {
  // canvas-pixel rectangle that displays the fence's top view
  left: number;
  top: number;
  width: number;
  height: number;
}

export class InputMapper {
  private anchorStylus: [number, number, number];
  private anchorRobot: [number, number, number] | null = null;
  private factor = 1.0;
  private z = 0.0; // robot-frame z offset from the anchor, scroll-controlled
  private close = false;
  private lastSent = -Infinity;

  constructor(operatorHome: [number, number, number] = [0, 0, 0]) {
    this.anchorStylus = [...operatorHome];
  }

  /** Adopt calibration anchors and scale from the first snapshot. */
  syncFromSnapshot(snap: Snapshot): void {
    if (this.anchorRobot === null) {
      this.anchorRobot = [...snap.home.robot];
      this.anchorStylus = [...snap.home.operator];
      this.factor = snap.scale.factor;
    }
  }

  /** Mirror the server's anchor rebase when the scale mode changes. */
  onScaleChanged(snap: Snapshot, lastStylus: [number, number, number] | null): void {
    if (lastStylus !== null) {
      this.anchorStylus = [...lastStylus];
      this.anchorRobot = [...snap.dt1.pose];
      this.z = 0.0;
    }
    this.factor = snap.scale.factor;
  }

  robotTargetFromPointer(
    px: number,
    py: number,
    rect: WorkspaceRect,
    fence: Snapshot["fence"],
  ): [number, number] {
    // canvas x spans fence x, canvas y spans fence y (top view)
    const fx = fence.lo[0] + ((px - rect.left) / rect.width) * (fence.hi[0] - fence.lo[0]);
    const fy = fence.lo[1] + ((py - rect.top) / rect.height) * (fence.hi[1] - fence.lo[1]);
    return [fx, fy];
  }

  stylusForRobotTarget(target: [number, number, number]): [number, number, number] {
    const a = this.anchorRobot ?? [0, 0, 0];
    return [
      this.anchorStylus[0] + (target[0] - a[0]) * this.factor,
      this.anchorStylus[1] + (target[1] - a[1]) * this.factor,
      this.anchorStylus[2] + (target[2] - a[2]) * this.factor,
    ];
  }

  pointerMove(
    px: number,
    py: number,
    rect: WorkspaceRect,
    snap: Snapshot,
    nowMs: number,
  ): Command | null {
    if (nowMs - this.lastSent < 1000 / COMMAND_RATE_HZ) return null; // rate limit
    this.syncFromSnapshot(snap);
    const [fx, fy] = this.robotTargetFromPointer(px, py, rect, snap.fence);
    const a = this.anchorRobot!;
    const position = this.stylusForRobotTarget([fx, fy, a[2] + this.z]);
    this.lastSent = nowMs;
    return { v: 1, type: "stylus-move", position, close: this.close };
  }

  scroll(ticks: number): void {
    this.z += ticks * SCROLL_STEP_M;
  }

  /** 'g' toggles the gripper; returns the command to send, if any. */
  keyPress(key: string, snap: Snapshot, nowMs: number): Command | null {
    if (key === "g") {
      this.close = !this.close;
      this.syncFromSnapshot(snap);
      const a = this.anchorRobot!;
      return {
        v: 1,
        type: "stylus-move",
        position: this.stylusForRobotTarget([snap.dt1.pose[0], snap.dt1.pose[1], a[2] + this.z]),
        close: this.close,
      };
    }
    return null;
  }

  get gripperClosed(): boolean {
    return this.close;
  }

  get zOffset(): number {
    return this.z;
  }
}
