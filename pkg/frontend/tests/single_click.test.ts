// Acceptance: one center-tool click issues exactly one mutation and
// renders exactly one colored marker once the server acknowledges.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { App } from "../src/app";
import { MockServer, RecordingContext, flush } from "./helpers";

describe("single-click contract", () => {
  let server: MockServer;
  let app: App;
  let ctx: RecordingContext;

  beforeEach(async () => {
    server = new MockServer();
    server.addClass(1, "mitotic figure", "#dc1e1e");
    server.addClass(2, "granulocyte", "#1eb44c");
    document.body.innerHTML = '<div id="app"></div>';
    ctx = new RecordingContext();
    app = new App({
      root: document.getElementById("app") as HTMLElement,
      api: new ApiClient("", "grace-token", server.fetch),
      viewW: 1024,
      viewH: 768,
      createContext: () => ctx,
    });
    await app.init();
  });

  it("one click, one POST, one colored marker on ack", async () => {
    app.setTool("center");
    app.selectClass(1);
    const before = server.mutationCalls().length;
    expect(before).toBe(0);

    const canvas = document.getElementById("viewer") as HTMLCanvasElement;
    canvas.dispatchEvent(new MouseEvent("click", { clientX: 512, clientY: 384, bubbles: true }));
    await flush();

    const mutations = server.mutationCalls();
    expect(mutations).toHaveLength(1);
    expect(mutations[0]).toBe("POST /slides/1/annotations");

    const dots = app.lastOverlayOps.filter((op) => op.type === "dot");
    expect(dots).toHaveLength(1);
    expect(dots[0]).toMatchObject({ color: "#dc1e1e", blinded: false });
  });

  it("a rejected click shows a toast and renders nothing", async () => {
    app.setTool("polygon");
    const canvas = document.getElementById("viewer") as HTMLCanvasElement;
    // two vertices, then attempt to close: the client blocks the submit
    canvas.dispatchEvent(new MouseEvent("click", { clientX: 100, clientY: 100, bubbles: true }));
    canvas.dispatchEvent(new MouseEvent("click", { clientX: 200, clientY: 100, bubbles: true }));
    canvas.dispatchEvent(new MouseEvent("dblclick", { clientX: 200, clientY: 100, bubbles: true }));
    await flush();
    expect(server.mutationCalls()).toHaveLength(0);
    expect(document.getElementById("status")?.textContent).toContain("3 points");
  });

  it("a second click is a second independent gesture", async () => {
    app.setTool("center");
    const canvas = document.getElementById("viewer") as HTMLCanvasElement;
    canvas.dispatchEvent(new MouseEvent("click", { clientX: 300, clientY: 300, bubbles: true }));
    await flush();
    canvas.dispatchEvent(new MouseEvent("click", { clientX: 400, clientY: 300, bubbles: true }));
    await flush();
    expect(server.mutationCalls()).toHaveLength(2);
    expect(app.lastOverlayOps.filter((op) => op.type === "dot")).toHaveLength(2);
  });
});
