// Application shell: canvas viewer, tools, class palette, blinded
// overlay, discovery and guided-screening navigation.
//
// The server is the source of truth: overlay state comes from
// annotation responses (blinded server-side) and is refreshed after
// every acknowledged mutation.

import { ApiClient, ApiError } from "./api";
import type { DrawOp } from "./overlay";
import { hitAnnotation, overlayOps } from "./overlay";
import type { Context2DLike } from "./render";
import { renderOverlay, renderTiles } from "./render";
import { TileLoader, tilePlacements } from "./tiles";
import type { Camera } from "./transform";
import { cameraForViewport, clampCamera, screenToWorld, visibleWorldRect, zoomBounds } from "./transform";
import type {
  AnnotationItem,
  ClassInfo,
  ModeName,
  SlideInfo,
  ToolName,
  Viewport,
  WirePoint,
} from "./types";

export interface AppOptions {
  root: HTMLElement;
  api: ApiClient;
  viewW?: number;
  viewH?: number;
  // injectable for tests; defaults to the real 2d context
  createContext?: (canvas: HTMLCanvasElement) => Context2DLike | null;
}

export class App {
  readonly api: ApiClient;
  readonly root: HTMLElement;
  readonly viewW: number;
  readonly viewH: number;

  slide!: SlideInfo;
  classes: ClassInfo[] = [];
  personName = "";

  camera: Camera = { centerX: 0, centerY: 0, zoom: 1 };
  tool: ToolName = "pan";
  mode: ModeName = "free";
  selectedClassId: number | null = null;
  annotations: AnnotationItem[] = [];
  wipPolygon: WirePoint[] = [];
  remaining: number | null = null;
  screeningProgress: number | null = null;
  lastOverlayOps: DrawOp[] = [];

  private canvas!: HTMLCanvasElement;
  private ctx: Context2DLike | null = null;
  private tiles!: TileLoader;
  private createContext: (canvas: HTMLCanvasElement) => Context2DLike | null;
  private statusEl!: HTMLElement;
  private bannerEl!: HTMLElement;
  private remainingEl!: HTMLElement;
  private progressEl!: HTMLProgressElement;
  private pickerEl!: HTMLElement;
  private paletteEl!: HTMLElement;
  private discoveryInFlight = false;
  private refreshTimer: ReturnType<typeof setTimeout> | null = null;
  private drag: { sx: number; sy: number; camera: Camera; moved: boolean } | null = null;

  constructor(options: AppOptions) {
    this.api = options.api;
    this.root = options.root;
    this.viewW = options.viewW ?? 1024;
    this.viewH = options.viewH ?? 704;
    this.createContext = options.createContext ?? ((c) => c.getContext("2d"));
  }

  async init(): Promise<void> {
    const [me, slides, classes] = await Promise.all([
      this.api.me(),
      this.api.slides(),
      this.api.classes(),
    ]);
    if (slides.length === 0) {
      throw new Error("server has no slides");
    }
    this.personName = me.name;
    this.slide = slides[0];
    this.classes = classes;
    this.selectedClassId = classes.length ? classes[0].id : null;
    this.buildDom();
    this.tiles = new TileLoader(this.api, () => this.render());
    const bounds = zoomBounds(this.slide, this.viewW, this.viewH);
    this.camera = clampCamera(
      this.slide,
      { centerX: this.slide.width / 2, centerY: this.slide.height / 2, zoom: bounds.max },
      this.viewW,
      this.viewH,
    );
    await this.refreshAnnotations();
  }

  // -- DOM ------------------------------------------------------------------

  private buildDom(): void {
    this.root.innerHTML = "";
    const toolbar = document.createElement("div");
    toolbar.className = "toolbar";

    const who = document.createElement("span");
    who.id = "who";
    who.textContent = `rater: ${this.personName}`;
    toolbar.append(who);

    for (const tool of ["pan", "center", "polygon"] as ToolName[]) {
      const button = document.createElement("button");
      button.id = `tool-${tool}`;
      button.textContent = tool;
      button.addEventListener("click", () => this.setTool(tool));
      toolbar.append(button);
    }

    this.paletteEl = document.createElement("div");
    this.paletteEl.id = "palette";
    this.classes.forEach((cls, index) => {
      const button = document.createElement("button");
      button.dataset.classId = String(cls.id);
      button.textContent = index < 9 ? `${index + 1} ${cls.name}` : cls.name;
      button.style.background = cls.color;
      button.addEventListener("click", () => this.selectClass(cls.id));
      this.paletteEl.append(button);
    });
    toolbar.append(this.paletteEl);

    const discoveryButton = document.createElement("button");
    discoveryButton.id = "mode-discovery";
    discoveryButton.textContent = "discovery";
    discoveryButton.addEventListener("click", () => void this.enterDiscovery());
    const screeningButton = document.createElement("button");
    screeningButton.id = "mode-screening";
    screeningButton.textContent = "screening";
    screeningButton.addEventListener("click", () => void this.enterScreening());
    const prevButton = document.createElement("button");
    prevButton.id = "screening-prev";
    prevButton.textContent = "prev";
    prevButton.addEventListener("click", () => void this.screeningStep("prev"));
    const nextButton = document.createElement("button");
    nextButton.id = "screening-next";
    nextButton.textContent = "next";
    nextButton.addEventListener("click", () => void this.advance());
    toolbar.append(discoveryButton, screeningButton, prevButton, nextButton);

    this.remainingEl = document.createElement("span");
    this.remainingEl.id = "remaining";
    this.progressEl = document.createElement("progress");
    this.progressEl.id = "screening-progress";
    this.progressEl.max = 1;
    this.progressEl.value = 0;
    this.statusEl = document.createElement("span");
    this.statusEl.id = "status";
    toolbar.append(this.remainingEl, this.progressEl, this.statusEl);

    this.canvas = document.createElement("canvas");
    this.canvas.id = "viewer";
    this.canvas.width = this.viewW;
    this.canvas.height = this.viewH;
    this.canvas.addEventListener("click", (event) => this.onClick(event));
    this.canvas.addEventListener("dblclick", (event) => this.onDoubleClick(event));
    this.canvas.addEventListener("mousedown", (event) => this.onMouseDown(event));
    this.canvas.addEventListener("mousemove", (event) => this.onMouseMove(event));
    this.canvas.addEventListener("mouseup", () => this.onMouseUp());
    this.canvas.addEventListener("wheel", (event) => this.onWheel(event), { passive: false });

    this.bannerEl = document.createElement("div");
    this.bannerEl.id = "banner";
    this.bannerEl.hidden = true;

    this.pickerEl = document.createElement("div");
    this.pickerEl.id = "picker";
    this.pickerEl.hidden = true;

    this.root.append(toolbar, this.canvas, this.bannerEl, this.pickerEl);
    this.ctx = this.createContext(this.canvas);

    window.addEventListener("keydown", (event) => this.onKey(event));
  }

  setTool(tool: ToolName): void {
    this.tool = tool;
    if (tool !== "polygon") {
      this.wipPolygon = [];
    }
    this.setStatus(`tool: ${tool}`);
    this.render();
  }

  selectClass(classId: number): void {
    this.selectedClassId = classId;
    const cls = this.classes.find((c) => c.id === classId);
    this.setStatus(`class: ${cls ? cls.name : classId}`);
  }

  setStatus(message: string): void {
    this.statusEl.textContent = message;
  }

  private showBanner(message: string): void {
    this.bannerEl.textContent = message;
    this.bannerEl.hidden = false;
  }

  // -- rendering --------------------------------------------------------------

  visibleRect(): Viewport {
    return visibleWorldRect(this.camera, this.viewW, this.viewH);
  }

  render(): void {
    this.lastOverlayOps = overlayOps(
      this.annotations,
      this.camera,
      this.viewW,
      this.viewH,
      this.wipPolygon,
    );
    if (this.ctx) {
      const placements = tilePlacements(this.slide, this.camera, this.viewW, this.viewH, (
        level,
        x,
        y,
        w,
        h,
      ) => this.api.regionUrl(this.slide.id, level, x, y, w, h));
      renderTiles(this.ctx, this.viewW, this.viewH, placements, this.tiles);
      renderOverlay(this.ctx, this.lastOverlayOps);
    }
    this.remainingEl.textContent = this.remaining === null ? "" : `remaining: ${this.remaining}`;
    if (this.screeningProgress !== null) {
      this.progressEl.value = this.screeningProgress;
    }
  }

  async refreshAnnotations(): Promise<void> {
    const rect = this.visibleRect();
    try {
      this.annotations = await this.api.annotations(this.slide.id, rect);
    } catch (error) {
      this.setStatus(String(error));
      return;
    }
    this.render();
  }

  private scheduleRefresh(): void {
    if (this.refreshTimer) {
      clearTimeout(this.refreshTimer);
    }
    this.refreshTimer = setTimeout(() => {
      this.refreshTimer = null;
      void this.refreshAnnotations();
    }, 150);
  }

  // -- pointer handling ---------------------------------------------------------

  private eventPoint(event: MouseEvent): { sx: number; sy: number } {
    const rect = this.canvas.getBoundingClientRect();
    return { sx: event.clientX - rect.left, sy: event.clientY - rect.top };
  }

  private onMouseDown(event: MouseEvent): void {
    const { sx, sy } = this.eventPoint(event);
    this.drag = { sx, sy, camera: { ...this.camera }, moved: false };
  }

  private onMouseMove(event: MouseEvent): void {
    const { sx, sy } = this.eventPoint(event);
    if (this.drag && (event.buttons & 1) === 1 && this.tool === "pan") {
      const dx = sx - this.drag.sx;
      const dy = sy - this.drag.sy;
      if (Math.abs(dx) + Math.abs(dy) > 2) {
        this.drag.moved = true;
      }
      this.camera = clampCamera(
        this.slide,
        {
          centerX: this.drag.camera.centerX - dx * this.drag.camera.zoom,
          centerY: this.drag.camera.centerY - dy * this.drag.camera.zoom,
          zoom: this.drag.camera.zoom,
        },
        this.viewW,
        this.viewH,
      );
      this.render();
      this.scheduleRefresh();
      return;
    }
    const hit = hitAnnotation(this.annotations, this.camera, this.viewW, this.viewH, sx, sy);
    this.canvas.title = hit && hit.blinded ? "unlabeled by you" : "";
  }

  private onMouseUp(): void {
    if (this.drag?.moved) {
      this.prefetchAround();
    }
  }

  private onWheel(event: WheelEvent): void {
    event.preventDefault();
    const { sx, sy } = this.eventPoint(event);
    const anchor = screenToWorld(this.camera, this.viewW, this.viewH, sx, sy);
    const factor = event.deltaY > 0 ? 1.25 : 0.8;
    const bounds = zoomBounds(this.slide, this.viewW, this.viewH);
    const zoom = Math.min(Math.max(this.camera.zoom * factor, bounds.min), bounds.max);
    // keep the world point under the cursor fixed
    this.camera = clampCamera(
      this.slide,
      {
        centerX: anchor.x - (sx - this.viewW / 2) * zoom,
        centerY: anchor.y - (sy - this.viewH / 2) * zoom,
        zoom,
      },
      this.viewW,
      this.viewH,
    );
    this.render();
    this.scheduleRefresh();
  }

  private onClick(event: MouseEvent): void {
    if (this.drag?.moved) {
      this.drag = null;
      return; // end of a pan, not a click gesture
    }
    this.drag = null;
    const { sx, sy } = this.eventPoint(event);
    if (this.tool === "center") {
      void this.clickCenter(sx, sy);
    } else if (this.tool === "polygon") {
      const world = screenToWorld(this.camera, this.viewW, this.viewH, sx, sy);
      this.wipPolygon.push({ x: Math.round(world.x), y: Math.round(world.y) });
      this.render();
    } else {
      const hit = hitAnnotation(this.annotations, this.camera, this.viewW, this.viewH, sx, sy);
      if (hit && hit.blinded) {
        this.openPicker(hit.id);
      }
    }
  }

  private onDoubleClick(event: MouseEvent): void {
    event.preventDefault();
    if (this.tool === "polygon") {
      void this.submitPolygon();
    }
  }

  private onKey(event: KeyboardEvent): void {
    if (event.key >= "1" && event.key <= "9") {
      const index = Number(event.key) - 1;
      if (index < this.classes.length) {
        this.selectClass(this.classes[index].id);
      }
    } else if (event.key === " ") {
      event.preventDefault();
      void this.advance();
    } else if (event.key === "Escape") {
      this.wipPolygon = [];
      this.pickerEl.hidden = true;
      this.render();
    }
  }

  // -- mutations ---------------------------------------------------------------

  // One gesture, one mutation: a center-tool click maps to exactly one
  // POST, and the marker appears only on the server's acknowledgement.
  async clickCenter(sx: number, sy: number): Promise<void> {
    if (this.selectedClassId === null) {
      this.setStatus("select a class first");
      return;
    }
    const world = screenToWorld(this.camera, this.viewW, this.viewH, sx, sy);
    const x = Math.round(world.x);
    const y = Math.round(world.y);
    const classId = this.selectedClassId;
    try {
      const created = await this.api.createCenter(this.slide.id, x, y, classId);
      const cls = this.classes.find((c) => c.id === classId);
      this.annotations.push({
        id: created.id,
        kind: "center",
        coordinates: [{ x, y }],
        color: cls ? cls.color : "#888888",
        blinded: false,
        labeled_by_others: false,
        class_id: classId,
      });
      this.render();
      this.setStatus(`annotation ${created.id} created`);
    } catch (error) {
      this.toastError(error);
    }
  }

  async submitPolygon(): Promise<void> {
    if (this.wipPolygon.length < 3) {
      this.setStatus("polygon needs at least 3 points");
      return;
    }
    if (this.selectedClassId === null) {
      this.setStatus("select a class first");
      return;
    }
    const points = this.wipPolygon;
    try {
      await this.api.createPolygon(this.slide.id, points, this.selectedClassId);
      this.wipPolygon = [];
      await this.refreshAnnotations();
    } catch (error) {
      this.toastError(error);
    }
  }

  openPicker(annotationId: number): void {
    this.pickerEl.innerHTML = "";
    this.pickerEl.hidden = false;
    for (const cls of this.classes) {
      const button = document.createElement("button");
      button.dataset.classId = String(cls.id);
      button.textContent = cls.name;
      button.style.background = cls.color;
      button.addEventListener("click", () => {
        this.pickerEl.hidden = true;
        void this.labelAnnotation(annotationId, cls.id);
      });
      this.pickerEl.append(button);
    }
  }

  async labelAnnotation(annotationId: number, classId: number): Promise<void> {
    try {
      await this.api.putLabel(annotationId, classId);
    } catch (error) {
      this.toastError(error);
      return;
    }
    await this.refreshAnnotations();
    if (this.mode === "discovery") {
      await this.maybeAdvanceDiscovery();
    }
  }

  private toastError(error: unknown): void {
    if (error instanceof ApiError) {
      this.setStatus(`rejected (${error.status}): ${error.message}`);
    } else {
      this.setStatus(String(error));
    }
  }

  // -- discovery ----------------------------------------------------------------

  async enterDiscovery(): Promise<void> {
    this.mode = "discovery";
    this.bannerEl.hidden = true;
    await this.fetchDiscoveryNext();
  }

  // The current view is complete when nothing visible is still blinded;
  // exactly one next-view fetch follows.
  async maybeAdvanceDiscovery(): Promise<void> {
    if (this.discoveryInFlight) {
      return;
    }
    if (this.annotations.some((a) => a.blinded)) {
      return;
    }
    await this.fetchDiscoveryNext();
  }

  private async fetchDiscoveryNext(): Promise<void> {
    if (this.discoveryInFlight) {
      return;
    }
    this.discoveryInFlight = true;
    try {
      const step = await this.api.discoveryNext(this.slide.id);
      this.remaining = step.remaining ?? null;
      if (step.done || !step.viewport) {
        this.mode = "free";
        this.showBanner("discovery complete: every object carries your label");
        this.render();
        return;
      }
      this.camera = cameraForViewport(this.slide, step.viewport, this.viewW, this.viewH);
      await this.refreshAnnotations();
    } catch (error) {
      this.toastError(error); // stay on the current view
    } finally {
      this.discoveryInFlight = false;
    }
  }

  // -- screening ----------------------------------------------------------------

  async enterScreening(): Promise<void> {
    this.mode = "screening";
    this.bannerEl.hidden = true;
    await this.screeningStep("next");
  }

  async screeningStep(direction: "next" | "prev"): Promise<void> {
    try {
      const step = await this.api.screeningStep(this.slide.id, direction);
      this.screeningProgress = step.progress ?? null;
      if (step.done || !step.viewport) {
        if (direction === "next") {
          this.mode = "free";
          this.showBanner("screening complete: all tissue fields visited");
        }
        this.render();
        return;
      }
      this.camera = cameraForViewport(this.slide, step.viewport, this.viewW, this.viewH);
      await this.refreshAnnotations();
    } catch (error) {
      this.toastError(error);
    }
  }

  async advance(): Promise<void> {
    if (this.mode === "discovery") {
      await this.fetchDiscoveryNext();
    } else if (this.mode === "screening") {
      await this.screeningStep("next");
    }
  }

  // prefetch one ring of tiles around the view so the next pan lands warm
  private prefetchAround(): void {
    const zoomed = { ...this.camera, zoom: this.camera.zoom };
    const margin = 1.5;
    const wide = tilePlacements(
      this.slide,
      zoomed,
      this.viewW * margin,
      this.viewH * margin,
      (level, x, y, w, h) => this.api.regionUrl(this.slide.id, level, x, y, w, h),
    );
    for (const placement of wide) {
      this.tiles.ensure(placement.url);
    }
  }
}
