/** Entry point: resolve the service base URL, build the store, render. */

import { ApiClient, DETECT_METHODS } from "./api.js";
import { renderApp } from "./render.js";
import { ConsoleStore } from "./state.js";

declare global {
  interface Window {
    CONSOLE_BASE_URL?: string;
  }
}

/** Runtime config: a global set by the host page wins, then a same-origin
 * default, so one build works against any deployment. */
export function resolveBaseUrl(win: Window): string {
  return win.CONSOLE_BASE_URL ?? "";
}

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
const store = new ConsoleStore(new ApiClient(resolveBaseUrl(window)));
renderApp(root, store, DETECT_METHODS);
