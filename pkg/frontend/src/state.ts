/** Console view state and the store that drives it.
 *
 * All transition logic lives here so it can be exercised without a DOM;
 * the render layer only reads state and dispatches store actions.
 */

import { ApiClient, ApiError, HistoryRecord } from "./api.js";

export interface DetectOutcome {
  label: string;
  explanation: string;
  strategyVersion: number | null;
  elapsedMs: number;
}

export interface Banner {
  code: string;
  message: string;
}

export interface ConsoleViewState {
  draft: string;
  method: string;
  inFlight: boolean;
  lastResult: DetectOutcome | null;
  history: HistoryRecord[];
  nextCursor: string | null;
  historyLoaded: boolean;
  selectedId: string | null;
  banner: Banner | null;
}

export function initialState(method: string = "llm-gan"): ConsoleViewState {
  return {
    draft: "",
    method,
    inFlight: false,
    lastResult: null,
    history: [],
    nextCursor: null,
    historyLoaded: false,
    selectedId: null,
    banner: null,
  };
}

/** Submission is possible only when idle and the draft is non-blank. */
export function canSubmit(state: ConsoleViewState): boolean {
  return !state.inFlight && state.draft.trim() !== "";
}

export function hasMore(state: ConsoleViewState): boolean {
  return state.nextCursor !== null;
}

/** A record that errored has no verdict; the row shows "undetermined". */
export function recordStatus(record: HistoryRecord): string {
  return record.label ?? "undetermined";
}

type Listener = (state: ConsoleViewState) => void;

export class ConsoleStore {
  state: ConsoleViewState;
  private listeners: Listener[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly pageSize: number = 20,
    method?: string,
  ) {
    this.state = initialState(method);
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<ConsoleViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  setDraft(draft: string): void {
    this.update({ draft });
  }

  setMethod(method: string): void {
    this.update({ method });
  }

  dismissBanner(): void {
    this.update({ banner: null });
  }

  /** Open one history record's full explanation; clicking again closes it. */
  selectRecord(id: string): void {
    this.update({ selectedId: this.state.selectedId === id ? null : id });
  }

  /** Returns false when no request was sent (blank draft or one in flight). */
  async submit(): Promise<boolean> {
    if (!canSubmit(this.state)) return false;
    this.update({ inFlight: true, banner: null });
    try {
      const res = await this.api.detect(this.state.draft, this.state.method);
      this.update({
        inFlight: false,
        lastResult: {
          label: res.label,
          explanation: res.explanation,
          strategyVersion: res.strategy_version,
          elapsedMs: res.elapsed_ms,
        },
      });
    } catch (err) {
      // No verdict is ever shown for a failed submission.
      this.update({ inFlight: false, lastResult: null, banner: toBanner(err) });
      return true;
    }
    await this.refreshHistory();
    return true;
  }

  /** Load or reload the newest-first first page. */
  async refreshHistory(): Promise<void> {
    try {
      const page = await this.api.history(this.pageSize);
      this.update({
        history: page.records,
        nextCursor: page.next_cursor,
        historyLoaded: true,
      });
    } catch (err) {
      this.update({ banner: toBanner(err) });
    }
  }

  /** Append the next page; a stale cursor resets to the first page. */
  async loadMore(): Promise<void> {
    const cursor = this.state.nextCursor;
    if (cursor === null) return;
    try {
      const page = await this.api.history(this.pageSize, cursor);
      this.update({
        history: [...this.state.history, ...page.records],
        nextCursor: page.next_cursor,
      });
    } catch (err) {
      this.update({ banner: toBanner(err) });
      if (err instanceof ApiError && err.code === "bad_cursor") {
        await this.refreshHistory();
      }
    }
  }
}

function toBanner(err: unknown): Banner {
  if (err instanceof ApiError) return { code: err.code, message: err.message };
  return { code: "internal", message: String(err) };
}
