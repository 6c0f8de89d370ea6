// Tile layout and loading for the region endpoint.
//
// The visible rect is covered by fixed-size tiles of the chosen pyramid
// level, each fetched as an immutable PNG region keyed by its URL, so
// the browser cache and our in-memory cache both work by content.

import type { ApiClient } from "./api";
import type { Camera } from "./transform";
import { bestLevel, worldToScreen } from "./transform";
import type { SlideInfo } from "./types";

export const DISPLAY_TILE = 256; // level px per fetched tile

export interface TilePlacement {
  url: string;
  sx: number; // screen px
  sy: number;
  size: number; // screen px (tiles are square)
}

export function tilePlacements(
  slide: SlideInfo,
  camera: Camera,
  viewW: number,
  viewH: number,
  regionUrl: (level: number, x: number, y: number, w: number, h: number) => string,
): TilePlacement[] {
  const level = bestLevel(slide.levels, camera.zoom);
  const info = slide.levels[level];
  const ds = info.downsample;
  const worldPerTile = DISPLAY_TILE * ds;

  const left = camera.centerX - (viewW / 2) * camera.zoom;
  const top = camera.centerY - (viewH / 2) * camera.zoom;
  const right = camera.centerX + (viewW / 2) * camera.zoom;
  const bottom = camera.centerY + (viewH / 2) * camera.zoom;

  const colA = Math.max(0, Math.floor(left / worldPerTile));
  const rowA = Math.max(0, Math.floor(top / worldPerTile));
  const colB = Math.min(Math.ceil(info.width / DISPLAY_TILE) - 1, Math.floor(right / worldPerTile));
  const rowB = Math.min(Math.ceil(info.height / DISPLAY_TILE) - 1, Math.floor(bottom / worldPerTile));

  const placements: TilePlacement[] = [];
  for (let row = rowA; row <= rowB; row++) {
    for (let col = colA; col <= colB; col++) {
      const wx = col * worldPerTile;
      const wy = row * worldPerTile;
      const screen = worldToScreen(camera, viewW, viewH, wx, wy);
      placements.push({
        url: regionUrl(level, wx, wy, DISPLAY_TILE, DISPLAY_TILE),
        sx: screen.x,
        sy: screen.y,
        size: worldPerTile / camera.zoom,
      });
    }
  }
  return placements;
}

export class TileLoader {
  private cache = new Map<string, ImageBitmap>();
  private pending = new Set<string>();

  constructor(
    private api: ApiClient,
    private onLoad: () => void,
    private capacity = 256,
  ) {}

  get(url: string): ImageBitmap | undefined {
    const bitmap = this.cache.get(url);
    if (bitmap) {
      // LRU refresh
      this.cache.delete(url);
      this.cache.set(url, bitmap);
    }
    return bitmap;
  }

  ensure(url: string): void {
    if (this.cache.has(url) || this.pending.has(url)) {
      return;
    }
    this.pending.add(url);
    this.api
      .fetchRegionBlob(url)
      .then((blob) => createImageBitmap(blob))
      .then((bitmap) => {
        this.cache.set(url, bitmap);
        while (this.cache.size > this.capacity) {
          const oldest = this.cache.keys().next().value as string;
          this.cache.delete(oldest);
        }
        this.onLoad();
      })
      .catch(() => {
        // transient failure: drop from pending so a later render retries
      })
      .finally(() => this.pending.delete(url));
  }
}
