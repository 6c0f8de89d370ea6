// Acceptance: completing the last unlabeled marker in the current view
// triggers exactly one /discovery/next fetch and a viewport change.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { App } from "../src/app";
import { MockServer, RecordingContext } from "./helpers";

describe("discovery mode", () => {
  let server: MockServer;
  let app: App;

  beforeEach(async () => {
    server = new MockServer();
    server.viewerId = 2;
    server.addClass(1, "cell", "#dc1e1e");
    // view A holds annotations 1+2 (one already labeled by the viewer),
    // view B holds annotation 3
    server.addAnnotation(1000, 1000, [[1, 1]]);
    server.addAnnotation(1100, 1050, [[1, 1], [2, 1]]);
    server.addAnnotation(3000, 3000, [[1, 1]]);
    server.discoveryQueue = [
      { x: 900, y: 900, w: 400, h: 300 },
      { x: 2900, y: 2900, w: 400, h: 300 },
    ];
    document.body.innerHTML = '<div id="app"></div>';
    app = new App({
      root: document.getElementById("app") as HTMLElement,
      api: new ApiClient("", "grace-token", server.fetch),
      viewW: 800,
      viewH: 600,
      createContext: () => new RecordingContext(),
    });
    await app.init();
  });

  it("labeling the last blinded marker fetches exactly one next view", async () => {
    await app.enterDiscovery();
    expect(server.discoveryCalls()).toHaveLength(1);
    expect(app.camera.centerX).toBe(1100); // framing view A
    const beforeCamera = { ...app.camera };
    const blinded = app.annotations.filter((a) => a.blinded);
    expect(blinded).toHaveLength(1);

    await app.labelAnnotation(blinded[0].id, 1);

    expect(server.discoveryCalls()).toHaveLength(2); // exactly one more
    expect(app.camera.centerX).not.toBe(beforeCamera.centerX);
    expect(app.camera.centerX).toBe(3100); // framing view B
    expect(app.remaining).toBe(1);
  });

  it("labeling something while blinded markers remain does not advance", async () => {
    await app.enterDiscovery();
    const labeled = app.annotations.find((a) => !a.blinded);
    expect(labeled).toBeDefined();
    await app.labelAnnotation(labeled!.id, 1); // relabel an own annotation
    expect(server.discoveryCalls()).toHaveLength(1);
  });

  it("exhausting the queue shows the completion banner and leaves the mode", async () => {
    await app.enterDiscovery();
    await app.labelAnnotation(2, 1); // wait: 2 is already labeled; label the blinded one
    const blinded = app.annotations.filter((a) => a.blinded);
    for (const item of blinded) {
      await app.labelAnnotation(item.id, 1);
    }
    // now in view B; label its marker, queue is exhausted
    const last = app.annotations.filter((a) => a.blinded);
    for (const item of last) {
      await app.labelAnnotation(item.id, 1);
    }
    const banner = document.getElementById("banner") as HTMLElement;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("discovery complete");
    expect(app.mode).toBe("free");
  });

  it("remaining counter decreases per labeled marker", async () => {
    await app.enterDiscovery();
    const before = server.remaining();
    const blinded = app.annotations.filter((a) => a.blinded);
    await app.labelAnnotation(blinded[0].id, 1);
    expect(server.remaining()).toBe(before - 1);
  });
});

describe("screening mode", () => {
  let server: MockServer;
  let app: App;

  beforeEach(async () => {
    server = new MockServer();
    server.addClass(1, "cell", "#dc1e1e");
    server.screeningCells = [
      { x: 0, y: 0, w: 1024, h: 1024 },
      { x: 1024, y: 0, w: 1024, h: 1024 },
      { x: 0, y: 1024, w: 1024, h: 1024 },
      { x: 1024, y: 1024, w: 1024, h: 1024 },
    ];
    document.body.innerHTML = '<div id="app"></div>';
    app = new App({
      root: document.getElementById("app") as HTMLElement,
      api: new ApiClient("", "t", server.fetch),
      viewW: 800,
      viewH: 600,
      createContext: () => new RecordingContext(),
    });
    await app.init();
  });

  it("walks four cells, then shows the completion banner at 100%", async () => {
    const { visibleWorldRect } = await import("../src/transform");
    await app.enterScreening();
    for (let i = 0; ; i++) {
      const cell = server.screeningCells[i];
      const rect = visibleWorldRect(app.camera, 800, 600);
      // each snap shows the whole cell
      expect(rect.x).toBeLessThanOrEqual(cell.x + 1e-9);
      expect(rect.y).toBeLessThanOrEqual(cell.y + 1e-9);
      expect(rect.x + rect.w).toBeGreaterThanOrEqual(cell.x + cell.w - 1e-9);
      expect(rect.y + rect.h).toBeGreaterThanOrEqual(cell.y + cell.h - 1e-9);
      if (i === 3) {
        break;
      }
      await app.screeningStep("next");
    }
    await app.screeningStep("next");
    const banner = document.getElementById("banner") as HTMLElement;
    expect(banner.hidden).toBe(false);
    expect(app.screeningProgress).toBe(1);
    const bar = document.getElementById("screening-progress") as HTMLProgressElement;
    expect(bar.value).toBe(1);
  });

  it("prev restores the previous cell", async () => {
    await app.enterScreening();
    const first = { ...app.camera };
    await app.screeningStep("next");
    expect(app.camera.centerX).not.toBe(first.centerX);
    await app.screeningStep("prev");
    expect(app.camera.centerX).toBe(first.centerX);
  });
});
