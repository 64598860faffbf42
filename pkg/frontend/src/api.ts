// Typed client for the session service. Field names mirror the JSON wire
// format exactly; every raster travels as a base64 PNG string.

export type CandidateStatus = "pending" | "accepted" | "rejected";
export type JobStatus = "queued" | "running" | "done" | "failed";

export interface MaskEntry {
  id: string;
  mask: string;
}

export interface PromptEntry {
  id: string;
  text: string;
  negative_text: string;
  guidance_scale: number;
}

export interface CandidateEntry {
  id: string;
  status: CandidateStatus;
  mask_id: string;
  prompt_id: string;
  seed: number;
  image: string;
}

export interface SessionView {
  id: string;
  created: string;
  image: string;
  masks: MaskEntry[];
  prompts: PromptEntry[];
  candidates: CandidateEntry[];
  accepted_count: number;
}

export interface JobView {
  id: string;
  session_id: string;
  status: JobStatus;
  result?: { candidate_ids: string[] };
  error?: string;
}

export interface AdjudicationResult {
  id: string;
  status: CandidateStatus;
  accepted_count: number;
}

export interface FidPreview {
  status: "ok" | "insufficient samples";
  tap: string;
  fid?: number;
  accepted: number;
  reference: number;
  required?: number;
}

export interface PromptForm {
  text: string;
  negative_text?: string;
  guidance_scale?: number;
}

export interface GenerateRequest {
  mask_id?: string;
  prompt_id?: string;
  count?: number;
  seed?: number;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class StudioApi {
  private fetchFn: FetchLike;

  constructor(private baseUrl = "", fetchFn?: FetchLike) {
    // bind lazily so the global fetch keeps its own receiver in browsers
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body !== undefined ? { "Content-Type": "application/json" } : undefined,
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    } catch (err) {
      throw new ApiError(0, err instanceof Error ? err.message : "network error");
    }
    if (!response.ok) {
      let detail = `HTTP ${response.status}`;
      try {
        const parsed = await response.json();
        if (parsed && parsed.detail) {
          detail = typeof parsed.detail === "string" ? parsed.detail : JSON.stringify(parsed.detail);
        }
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createSession(imageB64: string): Promise<SessionView> {
    return this.request("POST", "/sessions", { image: imageB64 });
  }

  getSession(sid: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sid}`);
  }

  addMask(sid: string, maskB64: string): Promise<{ id: string }> {
    return this.request("POST", `/sessions/${sid}/masks`, { mask: maskB64 });
  }

  addPrompt(sid: string, form: PromptForm): Promise<{ id: string }> {
    return this.request("POST", `/sessions/${sid}/prompts`, form);
  }

  startGeneration(sid: string, req: GenerateRequest): Promise<{ job_id: string }> {
    return this.request("POST", `/sessions/${sid}/generate`, req);
  }

  getJob(jobId: string): Promise<JobView> {
    return this.request("GET", `/jobs/${jobId}`);
  }

  accept(sid: string, cid: string): Promise<AdjudicationResult> {
    return this.request("POST", `/sessions/${sid}/candidates/${cid}/accept`);
  }

  reject(sid: string, cid: string): Promise<AdjudicationResult> {
    return this.request("POST", `/sessions/${sid}/candidates/${cid}/reject`);
  }

  fidPreview(sid: string): Promise<FidPreview> {
    return this.request("GET", `/sessions/${sid}/fid-preview`);
  }
}
