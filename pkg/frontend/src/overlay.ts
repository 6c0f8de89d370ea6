// Annotation overlay: server descriptors in, draw operations out.
//
// Colors come exclusively from the server response. A blinded item is
// drawn black no matter what; the client has no class information to
// invent, and forcing the color here keeps even a buggy payload from
// showing one.

import type { Camera } from "./transform";
import { screenToWorld, worldToScreen } from "./transform";
import type { AnnotationItem, WirePoint } from "./types";

export const BLINDED_COLOR = "#000000";
export const MARKER_RADIUS = 7; // screen px

export interface DotOp {
  type: "dot";
  annotationId: number;
  x: number;
  y: number;
  radius: number;
  color: string;
  blinded: boolean;
}

export interface PolyOp {
  type: "poly";
  annotationId: number;
  points: { x: number; y: number }[];
  color: string;
  blinded: boolean;
  close: boolean;
}

export interface WipOp {
  type: "wip";
  points: { x: number; y: number }[];
}

export type DrawOp = DotOp | PolyOp | WipOp;

export function overlayOps(
  items: AnnotationItem[],
  camera: Camera,
  viewW: number,
  viewH: number,
  wipPolygon: WirePoint[] = [],
): DrawOp[] {
  const ops: DrawOp[] = [];
  for (const item of items) {
    const color = item.blinded ? BLINDED_COLOR : item.color;
    if (item.kind === "center") {
      const screen = worldToScreen(camera, viewW, viewH, item.coordinates[0].x, item.coordinates[0].y);
      ops.push({
        type: "dot",
        annotationId: item.id,
        x: screen.x,
        y: screen.y,
        radius: MARKER_RADIUS,
        color,
        blinded: item.blinded,
      });
    } else {
      ops.push({
        type: "poly",
        annotationId: item.id,
        points: item.coordinates.map((p) => worldToScreen(camera, viewW, viewH, p.x, p.y)),
        color,
        blinded: item.blinded,
        close: true,
      });
    }
  }
  if (wipPolygon.length > 0) {
    ops.push({
      type: "wip",
      points: wipPolygon.map((p) => worldToScreen(camera, viewW, viewH, p.x, p.y)),
    });
  }
  return ops;
}

function pointInPolygon(x: number, y: number, vertices: WirePoint[]): boolean {
  let inside = false;
  for (let i = 0; i < vertices.length; i++) {
    const a = vertices[i];
    const b = vertices[(i + 1) % vertices.length];
    if (a.y > y !== b.y > y) {
      const xCross = a.x + ((y - a.y) * (b.x - a.x)) / (b.y - a.y);
      if (x < xCross) {
        inside = !inside;
      }
    }
  }
  return inside;
}

// Nearest annotation under a screen point: centers hit within their
// marker radius, polygons when the point falls inside. Used to pick a
// black marker for relabeling.
export function hitAnnotation(
  items: AnnotationItem[],
  camera: Camera,
  viewW: number,
  viewH: number,
  sx: number,
  sy: number,
): AnnotationItem | null {
  let best: AnnotationItem | null = null;
  let bestDist = Infinity;
  const world = screenToWorld(camera, viewW, viewH, sx, sy);
  for (const item of items) {
    let dist: number;
    if (item.kind === "center") {
      const screen = worldToScreen(camera, viewW, viewH, item.coordinates[0].x, item.coordinates[0].y);
      dist = Math.hypot(screen.x - sx, screen.y - sy);
      if (dist > MARKER_RADIUS + 4) {
        continue;
      }
    } else {
      if (!pointInPolygon(world.x, world.y, item.coordinates)) {
        continue;
      }
      dist = 0;
    }
    if (dist < bestDist || (dist === bestDist && best !== null && item.id < best.id)) {
      best = item;
      bestDist = dist;
    }
  }
  return best;
}
