/** Shared doubles for the console tests: canned responses and a fetch stub. */

import {
  ApiClient,
  DetectResponse,
  FetchLike,
  HistoryRecord,
} from "../src/api.js";
import { ConsoleStore } from "../src/state.js";

export function reply(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  } as unknown as Response;
}

export function emptyHistory(): Response {
  return reply(200, { records: [], next_cursor: null });
}

export function record(
  overrides: Partial<HistoryRecord> & { submission_id: string },
): HistoryRecord {
  return {
    received_at: 1_755_900_000,
    text: "Some submitted text.",
    method: "llm-gan",
    label: "real",
    explanation: "Looks consistent with the public record.",
    strategy_version: 3,
    elapsed_ms: 12,
    error: null,
    client_tag: null,
    ...overrides,
  };
}

export const DETECT_OK: DetectResponse = {
  submission_id: "abc123",
  label: "fake",
  explanation:
    'The overnight reversal has no matching record; 来源缺失 & <b>not markup</b> "quoted".\nSecond line.',
  strategy_version: 6,
  elapsed_ms: 41,
};

export interface Call {
  url: string;
  init?: RequestInit;
}

export type Handler = (url: string, init?: RequestInit) => Response | Promise<Response>;

export class FakeService {
  calls: Call[] = [];
  constructor(private readonly handler: Handler) {}

  fetch: FetchLike = async (url, init) => {
    this.calls.push({ url, init });
    return this.handler(url, init);
  };

  detectCalls(): Call[] {
    return this.calls.filter((c) => c.url.includes("/v1/detect"));
  }

  historyCalls(): Call[] {
    return this.calls.filter((c) => c.url.includes("/v1/history"));
  }
}

export function service(
  detect: Response | (() => Response),
  history: Handler = () => emptyHistory(),
): FakeService {
  return new FakeService((url, init) => {
    if (url.includes("/v1/detect")) {
      return typeof detect === "function" ? detect() : detect;
    }
    if (url.includes("/v1/history")) return history(url, init);
    throw new Error(`unexpected request: ${url}`);
  });
}

export function storeWith(svc: FakeService, pageSize = 20): ConsoleStore {
  return new ConsoleStore(new ApiClient("http://svc.test", svc.fetch), pageSize);
}
