import type {
  AnnotationItem,
  ClassInfo,
  ProgressResponse,
  SlideInfo,
  StepResponse,
  Viewport,
  WirePoint,
} from "./types";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private base: string,
    private token: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.base + path, {
      method,
      headers: {
        "X-Auth-Token": this.token,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        detail = ((await response.json()) as { detail?: string }).detail ?? detail;
      } catch {
        // non-JSON error body
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  me(): Promise<{ person_id: number; name: string }> {
    return this.request("GET", "/me");
  }

  slides(): Promise<SlideInfo[]> {
    return this.request("GET", "/slides");
  }

  classes(): Promise<ClassInfo[]> {
    return this.request("GET", "/classes");
  }

  annotations(slideId: number, view: Viewport): Promise<AnnotationItem[]> {
    const query = `x=${Math.floor(view.x)}&y=${Math.floor(view.y)}&w=${Math.ceil(view.w)}&h=${Math.ceil(view.h)}`;
    return this.request<{ annotations: AnnotationItem[] }>(
      "GET",
      `/slides/${slideId}/annotations?${query}`,
    ).then((data) => data.annotations);
  }

  createCenter(slideId: number, x: number, y: number, classId: number): Promise<{ id: number }> {
    return this.request("POST", `/slides/${slideId}/annotations`, {
      kind: "center",
      x,
      y,
      class_id: classId,
    });
  }

  createPolygon(slideId: number, points: WirePoint[], classId: number): Promise<{ id: number }> {
    return this.request("POST", `/slides/${slideId}/annotations`, {
      kind: "polygon",
      points,
      class_id: classId,
    });
  }

  putLabel(annotationId: number, classId: number): Promise<{ id: number }> {
    return this.request("PUT", `/annotations/${annotationId}/label`, { class_id: classId });
  }

  discoveryNext(slideId: number): Promise<StepResponse> {
    return this.request("GET", `/slides/${slideId}/discovery/next`);
  }

  screeningStep(slideId: number, direction: "next" | "prev" | "current"): Promise<StepResponse> {
    return this.request("GET", `/slides/${slideId}/screening/${direction}`);
  }

  progress(slideId: number): Promise<ProgressResponse> {
    return this.request("GET", `/slides/${slideId}/progress`);
  }

  regionUrl(slideId: number, level: number, x: number, y: number, w: number, h: number): string {
    return `${this.base}/slides/${slideId}/region?level=${level}&x=${x}&y=${y}&w=${w}&h=${h}`;
  }

  async fetchRegionBlob(url: string): Promise<Blob> {
    const response = await this.fetchImpl(url, {
      headers: { "X-Auth-Token": this.token },
    });
    if (!response.ok) {
      throw new ApiError(response.status, `tile fetch failed: ${response.status}`);
    }
    return response.blob();
  }
}
