// In-memory stand-in for the annotation server, implementing the same
// wire semantics: blinding by viewer, creator labels on POST, scripted
// discovery/screening navigation. Every request is logged for
// instrumentation.

import type { Context2DLike } from "../src/render";
import type { ClassInfo, Viewport } from "../src/types";

interface MockAnnotation {
  id: number;
  kind: "center" | "polygon";
  coordinates: { x: number; y: number }[];
  labels: Map<number, number>; // person -> class
}

export class MockServer {
  calls: string[] = [];
  annotations = new Map<number, MockAnnotation>();
  classes: ClassInfo[] = [];
  viewerId = 2;
  viewerName = "grace";
  slide = { id: 1, name: "demo", width: 4096, height: 4096, tile_size: 256 };
  discoveryQueue: Viewport[] = [];
  private discoveryCursor = 0;
  screeningCells: Viewport[] = [];
  private screeningCursor = 0;
  private nextId = 1;

  addClass(id: number, name: string, color: string): void {
    this.classes.push({ id, name, color });
  }

  addAnnotation(
    x: number,
    y: number,
    labels: Array<[person: number, cls: number]>,
    kind: "center" | "polygon" = "center",
    coordinates?: { x: number; y: number }[],
  ): number {
    const id = this.nextId++;
    this.annotations.set(id, {
      id,
      kind,
      coordinates: coordinates ?? [{ x, y }],
      labels: new Map(labels),
    });
    return id;
  }

  remaining(): number {
    let count = 0;
    for (const ann of this.annotations.values()) {
      if (!ann.labels.has(this.viewerId)) {
        count++;
      }
    }
    return count;
  }

  private blindedItem(ann: MockAnnotation) {
    const own = ann.labels.get(this.viewerId);
    const others = [...ann.labels.keys()].some((p) => p !== this.viewerId);
    const base = {
      id: ann.id,
      kind: ann.kind,
      coordinates: ann.coordinates,
      labeled_by_others: others,
    };
    if (own !== undefined) {
      const cls = this.classes.find((c) => c.id === own);
      return { ...base, color: cls ? cls.color : "#888888", blinded: false, class_id: own };
    }
    return { ...base, color: "#000000", blinded: true };
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = new URL(String(input), "http://mock");
    const method = init?.method ?? "GET";
    const path = url.pathname;
    this.calls.push(`${method} ${path}`);
    const json = (body: unknown, status = 200) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });

    if (path === "/me") {
      return json({ person_id: this.viewerId, name: this.viewerName });
    }
    if (path === "/slides") {
      return json([
        {
          ...this.slide,
          levels: [
            { downsample: 1, width: this.slide.width, height: this.slide.height },
            { downsample: 2, width: this.slide.width / 2, height: this.slide.height / 2 },
            { downsample: 4, width: this.slide.width / 4, height: this.slide.height / 4 },
          ],
        },
      ]);
    }
    if (path === "/classes") {
      return json(this.classes);
    }
    if (path === "/slides/1/annotations" && method === "GET") {
      const x = Number(url.searchParams.get("x"));
      const y = Number(url.searchParams.get("y"));
      const w = Number(url.searchParams.get("w"));
      const h = Number(url.searchParams.get("h"));
      const items = [...this.annotations.values()]
        .filter((ann) => {
          const xs = ann.coordinates.map((p) => p.x);
          const ys = ann.coordinates.map((p) => p.y);
          return (
            Math.min(...xs) < x + w &&
            Math.max(...xs) >= x &&
            Math.min(...ys) < y + h &&
            Math.max(...ys) >= y
          );
        })
        .map((ann) => this.blindedItem(ann));
      return json({ annotations: items });
    }
    if (path === "/slides/1/annotations" && method === "POST") {
      const body = JSON.parse(String(init?.body));
      if (body.kind === "polygon" && (!body.points || body.points.length < 3)) {
        return json({ detail: "polygon needs at least 3 points" }, 400);
      }
      const id =
        body.kind === "center"
          ? this.addAnnotation(body.x, body.y, [[this.viewerId, body.class_id]])
          : this.addAnnotation(0, 0, [[this.viewerId, body.class_id]], "polygon", body.points);
      return json({ id }, 201);
    }
    const labelMatch = path.match(/^\/annotations\/(\d+)\/label$/);
    if (labelMatch && method === "PUT") {
      const ann = this.annotations.get(Number(labelMatch[1]));
      if (!ann) {
        return json({ detail: "unknown annotation" }, 404);
      }
      const body = JSON.parse(String(init?.body));
      ann.labels.set(this.viewerId, body.class_id);
      return json({ id: ann.id, class_id: body.class_id });
    }
    if (path === "/slides/1/discovery/next") {
      if (this.discoveryCursor >= this.discoveryQueue.length) {
        return json({ done: true, remaining: this.remaining() });
      }
      const viewport = this.discoveryQueue[this.discoveryCursor++];
      return json({ viewport, remaining: this.remaining() });
    }
    const screeningMatch = path.match(/^\/slides\/1\/screening\/(next|prev|current)$/);
    if (screeningMatch) {
      const direction = screeningMatch[1];
      if (direction === "next") {
        if (this.screeningCursor >= this.screeningCells.length) {
          return json({ done: true, progress: 1 });
        }
        const viewport = this.screeningCells[this.screeningCursor++];
        return json({ viewport, progress: this.screeningCursor / this.screeningCells.length });
      }
      if (direction === "prev") {
        this.screeningCursor = Math.max(this.screeningCursor - 1, 0);
        if (this.screeningCursor === 0) {
          return json({ done: true, progress: 0 });
        }
        return json({
          viewport: this.screeningCells[this.screeningCursor - 1],
          progress: (this.screeningCursor - 1) / this.screeningCells.length,
        });
      }
    }
    if (path === "/slides/1/progress") {
      return json({
        discovery_remaining: this.remaining(),
        screening_progress: this.screeningCursor / Math.max(this.screeningCells.length, 1),
      });
    }
    if (path === "/slides/1/region") {
      return new Response(new Blob([new Uint8Array([0])]), { status: 200 });
    }
    return json({ detail: `unrouted: ${method} ${path}` }, 404);
  };

  mutationCalls(): string[] {
    return this.calls.filter((c) => c.startsWith("POST") || c.startsWith("PUT"));
  }

  discoveryCalls(): string[] {
    return this.calls.filter((c) => c.includes("/discovery/next"));
  }
}

// Records draw operations instead of rasterizing; jsdom has no canvas.
export class RecordingContext implements Context2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern = "";
  strokeStyle: string | CanvasGradient | CanvasPattern = "";
  lineWidth = 0;
  ops: string[] = [];
  clearRect(): void {
    this.ops.push("clearRect");
  }
  fillRect(): void {
    this.ops.push("fillRect");
  }
  drawImage(): void {
    this.ops.push("drawImage");
  }
  beginPath(): void {
    this.ops.push("beginPath");
  }
  arc(x: number, y: number): void {
    this.ops.push(`arc@${Math.round(x)},${Math.round(y)}:${String(this.fillStyle)}`);
  }
  moveTo(): void {
    this.ops.push("moveTo");
  }
  lineTo(): void {
    this.ops.push("lineTo");
  }
  closePath(): void {
    this.ops.push("closePath");
  }
  fill(): void {
    this.ops.push(`fill:${String(this.fillStyle)}`);
  }
  stroke(): void {
    this.ops.push("stroke");
  }
}

export function flush(ms = 0): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
