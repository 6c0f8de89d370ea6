// Viewport math between screen pixels and slide (level-0) pixels.
//
// zoom is level-0 px per screen px: 1 is full detail, larger values
// zoom out. All transforms are pure so they can be tested exactly.

import type { LevelInfo, SlideInfo, Viewport } from "./types";

export interface Camera {
  centerX: number; // level-0 px
  centerY: number;
  zoom: number; // level-0 px per screen px
}

export function worldToScreen(
  camera: Camera,
  viewW: number,
  viewH: number,
  wx: number,
  wy: number,
): { x: number; y: number } {
  return {
    x: (wx - camera.centerX) / camera.zoom + viewW / 2,
    y: (wy - camera.centerY) / camera.zoom + viewH / 2,
  };
}

export function screenToWorld(
  camera: Camera,
  viewW: number,
  viewH: number,
  sx: number,
  sy: number,
): { x: number; y: number } {
  return {
    x: camera.centerX + (sx - viewW / 2) * camera.zoom,
    y: camera.centerY + (sy - viewH / 2) * camera.zoom,
  };
}

export function visibleWorldRect(camera: Camera, viewW: number, viewH: number): Viewport {
  const w = viewW * camera.zoom;
  const h = viewH * camera.zoom;
  return { x: camera.centerX - w / 2, y: camera.centerY - h / 2, w, h };
}

// Highest-resolution level that is not blurrier than the current zoom.
export function bestLevel(levels: LevelInfo[], zoom: number): number {
  const target = Math.max(zoom, 1);
  let best = 0;
  levels.forEach((level, index) => {
    if (level.downsample <= target) {
      best = index;
    }
  });
  return best;
}

// Zoom range: full detail (1 level-0 px per screen px) out to the zoom
// that just covers the whole slide.
export function zoomBounds(
  slide: SlideInfo,
  viewW: number,
  viewH: number,
): { min: number; max: number } {
  const cover = Math.max(slide.width / viewW, slide.height / viewH);
  return { min: Math.min(1, cover), max: Math.max(1, cover) };
}

export function clampCamera(
  slide: SlideInfo,
  camera: Camera,
  viewW: number,
  viewH: number,
): Camera {
  const bounds = zoomBounds(slide, viewW, viewH);
  const zoom = Math.min(Math.max(camera.zoom, bounds.min), bounds.max);
  const halfW = (viewW * zoom) / 2;
  const halfH = (viewH * zoom) / 2;
  const clampAxis = (center: number, half: number, extent: number) => {
    if (2 * half >= extent) {
      return extent / 2;
    }
    return Math.min(Math.max(center, half), extent - half);
  };
  return {
    centerX: clampAxis(camera.centerX, halfW, slide.width),
    centerY: clampAxis(camera.centerY, halfH, slide.height),
    zoom,
  };
}

// Camera that shows exactly the given world rect (e.g. a screening cell
// or a discovery viewport), at the tightest zoom that contains it.
export function cameraForViewport(
  slide: SlideInfo,
  view: Viewport,
  viewW: number,
  viewH: number,
): Camera {
  const zoom = Math.max(view.w / viewW, view.h / viewH);
  return clampCamera(
    slide,
    { centerX: view.x + view.w / 2, centerY: view.y + view.h / 2, zoom },
    viewW,
    viewH,
  );
}
