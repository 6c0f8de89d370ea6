// Wire types for the annotation server API.

export interface LevelInfo {
  downsample: number;
  width: number;
  height: number;
}

export interface SlideInfo {
  id: number;
  name: string;
  width: number;
  height: number;
  tile_size: number;
  levels: LevelInfo[];
}

export interface ClassInfo {
  id: number;
  name: string;
  color: string; // "#rrggbb"
}

export interface WirePoint {
  x: number;
  y: number;
}

// Blinded by the server: a foreign-labeled annotation arrives black,
// without class_id. The client never re-derives class information.
export interface AnnotationItem {
  id: number;
  kind: "center" | "polygon";
  coordinates: WirePoint[];
  color: string;
  blinded: boolean;
  labeled_by_others: boolean;
  class_id?: number;
}

export interface Viewport {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface StepResponse {
  done?: boolean;
  viewport?: Viewport;
  remaining?: number;
  progress?: number;
}

export interface ProgressResponse {
  discovery_remaining: number;
  screening_progress: number;
}

export type ToolName = "pan" | "center" | "polygon";
export type ModeName = "free" | "discovery" | "screening";
