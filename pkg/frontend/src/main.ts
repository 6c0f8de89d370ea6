import { ApiClient } from "./api";
import { App } from "./app";

// Server address and token come from the URL:
//   index.html?server=http://127.0.0.1:8077&token=ada-token
const params = new URLSearchParams(location.search);
const server = params.get("server") ?? "";
const token = params.get("token") ?? "";

const root = document.getElementById("app") as HTMLElement;

if (!token) {
  root.innerHTML = `<p class="hint">append <code>?server=http://127.0.0.1:8077&amp;token=YOUR-TOKEN</code> to the URL</p>`;
} else {
  const app = new App({ root, api: new ApiClient(server, token) });
  app.init().catch((error) => {
    root.innerHTML = `<p class="hint">failed to start: ${String(error)}</p>`;
  });
}
