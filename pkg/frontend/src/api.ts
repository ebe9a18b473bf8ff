/** Typed client for the detection service's public HTTP endpoints. */

export interface DetectResponse {
  submission_id: string;
  label: string;
  explanation: string;
  strategy_version: number | null;
  elapsed_ms: number;
}

export interface HistoryRecord {
  submission_id: string;
  received_at: number;
  text: string;
  method: string;
  label: string | null;
  explanation: string | null;
  strategy_version: number | null;
  elapsed_ms: number;
  error: string | null;
  client_tag: string | null;
}

export interface HistoryPage {
  records: HistoryRecord[];
  next_cursor: string | null;
}

/** Non-2xx replies carry {code, message}; network failures get code "network". */
export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number | null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export const DETECT_METHODS = [
  "llm-gan",
  "zero-shot",
  "zero-shot-cot",
  "few-shot",
  "few-shot-cot",
] as const;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async detect(text: string, method: string, clientTag?: string): Promise<DetectResponse> {
    const body: Record<string, unknown> = { text, method };
    if (clientTag !== undefined) body.client_tag = clientTag;
    return this.request<DetectResponse>("/v1/detect", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async history(limit: number, before?: string): Promise<HistoryPage> {
    const params = new URLSearchParams({ limit: String(limit) });
    if (before !== undefined) params.set("before", before);
    return this.request<HistoryPage>(`/v1/history?${params}`);
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError("network", `service unreachable: ${String(err)}`, null);
    }
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      // fall through; a non-JSON body on an error status still raises below
    }
    if (!response.ok) {
      const err = (payload ?? {}) as { code?: string; message?: string };
      throw new ApiError(
        err.code ?? "http_error",
        err.message ?? `request failed with status ${response.status}`,
        response.status,
      );
    }
    return payload as T;
  }
}
