// Canvas drawing, kept behind a minimal context interface so tests can
// record operations instead of rasterizing.

import type { DrawOp } from "./overlay";
import type { TileLoader, TilePlacement } from "./tiles";

export interface Context2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  drawImage(image: CanvasImageSource, dx: number, dy: number, dw: number, dh: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
}

export function renderTiles(
  ctx: Context2DLike,
  viewW: number,
  viewH: number,
  placements: TilePlacement[],
  loader: TileLoader,
): void {
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, viewW, viewH);
  for (const placement of placements) {
    const bitmap = loader.get(placement.url);
    if (bitmap) {
      ctx.drawImage(bitmap, placement.sx, placement.sy, placement.size, placement.size);
    } else {
      loader.ensure(placement.url);
    }
  }
}

export function renderOverlay(ctx: Context2DLike, ops: DrawOp[]): void {
  for (const op of ops) {
    if (op.type === "dot") {
      ctx.beginPath();
      ctx.arc(op.x, op.y, op.radius, 0, Math.PI * 2);
      ctx.fillStyle = op.color;
      ctx.fill();
      ctx.strokeStyle = "#ffffff";
      ctx.lineWidth = 1.5;
      ctx.stroke();
    } else if (op.type === "poly") {
      ctx.beginPath();
      op.points.forEach((p, i) => (i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
      if (op.close) {
        ctx.closePath();
      }
      ctx.strokeStyle = op.color;
      ctx.lineWidth = 2;
      ctx.stroke();
    } else {
      ctx.beginPath();
      op.points.forEach((p, i) => (i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
      ctx.strokeStyle = "#3399ff";
      ctx.lineWidth = 1.5;
      ctx.stroke();
      for (const p of op.points) {
        ctx.beginPath();
        ctx.arc(p.x, p.y, 3, 0, Math.PI * 2);
        ctx.fillStyle = "#3399ff";
        ctx.fill();
      }
    }
  }
}
