/** DOM layer: builds the console skeleton once, then re-renders the
 * dynamic regions (result, banner, history) on every store update.
 *
 * User-controlled strings (labels, explanations, submitted text) are
 * always assigned through textContent, never parsed as markup.
 */

import { HistoryRecord } from "./api.js";
import {
  canSubmit,
  ConsoleStore,
  ConsoleViewState,
  hasMore,
  recordStatus,
} from "./state.js";

export function badgeClass(label: string): string {
  return label === "real" ? "badge badge-real" : "badge badge-fake";
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tagName: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tagName);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderApp(root: HTMLElement, store: ConsoleStore, methods: readonly string[]): void {
  const doc = root.ownerDocument;
  root.textContent = "";

  const banner = el(doc, "div", "banner-slot");
  const form = el(doc, "div", "submit-form");
  const draft = el(doc, "textarea", "draft");
  draft.placeholder = "Paste a news item to check";
  draft.rows = 6;
  const controls = el(doc, "div", "controls");
  const methodSelect = el(doc, "select", "method");
  for (const method of methods) {
    const option = el(doc, "option", undefined, method);
    option.value = method;
    methodSelect.append(option);
  }
  const submit = el(doc, "button", "submit", "Detect");
  controls.append(methodSelect, submit);
  form.append(draft, controls);
  const result = el(doc, "div", "result-slot");
  const history = el(doc, "div", "history-slot");
  root.append(banner, form, result, history);

  draft.addEventListener("input", () => store.setDraft(draft.value));
  methodSelect.addEventListener("change", () => store.setMethod(methodSelect.value));
  submit.addEventListener("click", () => void store.submit());

  const rerender = (state: ConsoleViewState) => {
    submit.disabled = !canSubmit(state);
    submit.textContent = state.inFlight ? "Detecting…" : "Detect";
    renderBanner(banner, state, store);
    renderResult(result, state);
    renderHistory(history, state, store);
  };
  store.subscribe(rerender);
  rerender(store.state);
  void store.refreshHistory();
}

function renderBanner(slot: HTMLElement, state: ConsoleViewState, store: ConsoleStore): void {
  slot.textContent = "";
  if (!state.banner) return;
  const doc = slot.ownerDocument;
  const box = el(doc, "div", "banner");
  box.append(
    el(doc, "strong", undefined, state.banner.code),
    el(doc, "span", "banner-message", ` ${state.banner.message}`),
  );
  const dismiss = el(doc, "button", "banner-dismiss", "dismiss");
  dismiss.addEventListener("click", () => store.dismissBanner());
  box.append(dismiss);
  slot.append(box);
}

function renderResult(slot: HTMLElement, state: ConsoleViewState): void {
  slot.textContent = "";
  const outcome = state.lastResult;
  if (!outcome) return;
  const doc = slot.ownerDocument;
  const card = el(doc, "div", "result");
  card.append(el(doc, "span", badgeClass(outcome.label), outcome.label));
  const version =
    outcome.strategyVersion === null
      ? "baseline prompt"
      : `strategy v${outcome.strategyVersion}`;
  card.append(el(doc, "span", "meta", `${version} · ${outcome.elapsedMs} ms`));
  card.append(el(doc, "p", "explanation", outcome.explanation));
  slot.append(card);
}

function renderHistory(slot: HTMLElement, state: ConsoleViewState, store: ConsoleStore): void {
  slot.textContent = "";
  const doc = slot.ownerDocument;
  slot.append(el(doc, "h2", undefined, "History"));
  if (state.historyLoaded && state.history.length === 0) {
    slot.append(el(doc, "p", "history-empty", "No submissions yet."));
    return;
  }
  const list = el(doc, "ul", "history-list");
  for (const record of state.history) {
    list.append(historyRow(doc, record, state, store));
  }
  slot.append(list);
  if (hasMore(state)) {
    const more = el(doc, "button", "load-more", "Load more");
    more.addEventListener("click", () => void store.loadMore());
    slot.append(more);
  }
}

function historyRow(
  doc: Document,
  record: HistoryRecord,
  state: ConsoleViewState,
  store: ConsoleStore,
): HTMLElement {
  const row = el(doc, "li", "history-row");
  const status = recordStatus(record);
  const badge =
    status === "undetermined"
      ? el(doc, "span", "badge badge-undetermined", status)
      : el(doc, "span", badgeClass(status), status);
  const preview = el(doc, "span", "history-text", record.text);
  const when = el(
    doc,
    "span",
    "history-when",
    new Date(record.received_at * 1000).toLocaleString(),
  );
  row.append(badge, preview, when);
  row.addEventListener("click", () => store.selectRecord(record.submission_id));
  if (state.selectedId === record.submission_id) {
    row.classList.add("selected");
    const detail = el(doc, "div", "history-detail");
    detail.append(
      el(doc, "p", "explanation", record.explanation ?? `error: ${record.error}`),
    );
    row.append(detail);
  }
  return row;
}
