/** Typed client for the segmentation service. */

export interface SequenceInfo {
  id: string;
  n_frames: number;
  width: number;
  height: number;
  pixel_spacing_mm: number;
  frame_interval_s: number;
  has_uips: boolean;
}

export interface BoundaryPayload {
  frame: number;
  theta_deg: number[];
  r_px: number[];
  x_px: number[];
  y_px: number[];
}

export interface ResultPayload {
  n_frames: number;
  pixel_spacing_mm: number;
  frame_interval_s: number;
  volume_curve_ml: number[];
  raw_volume_curve_ml: number[];
  beats: [number, number][];
  edv_ml: number[];
  esv_ml: number[];
  ef_percent: number[];
  boundaries: BoundaryPayload[];
  provenance: Record<string, unknown>;
}

export interface JobInfo {
  id: string;
  sequence_id: string;
  status: "queued" | "running" | "done" | "failed";
  error: string | null;
}

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    public baseUrl: string = "",
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && body.detail) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ServiceError(resp.status, detail);
    }
    return resp;
  }

  async listSequences(): Promise<SequenceInfo[]> {
    return (await this.request("/sequences")).json();
  }

  frameUrl(sequenceId: string, frame: number): string {
    return `${this.baseUrl}/sequences/${sequenceId}/frames/${frame}`;
  }

  async postUips(
    sequenceId: string,
    points: { apex: [number, number]; mv_left: [number, number]; mv_right: [number, number] },
  ): Promise<void> {
    await this.request(`/sequences/${sequenceId}/uips`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(points),
    });
  }

  async startJob(sequenceId: string, params?: Record<string, unknown>): Promise<string> {
    const resp = await this.request("/jobs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ sequence_id: sequenceId, params: params ?? null }),
    });
    const body = await resp.json();
    return body.job_id as string;
  }

  async jobStatus(jobId: string): Promise<JobInfo> {
    return (await this.request(`/jobs/${jobId}`)).json();
  }

  /** Raw result body; kept as text so exports stay byte-identical. */
  async jobResultText(jobId: string): Promise<string> {
    return (await this.request(`/jobs/${jobId}/result`)).text();
  }

  async pollJob(
    jobId: string,
    onUpdate?: (info: JobInfo) => void,
    intervalMs = 500,
    maxWaitMs = 15 * 60 * 1000,
  ): Promise<JobInfo> {
    const started = Date.now();
    for (;;) {
      const info = await this.jobStatus(jobId);
      onUpdate?.(info);
      if (info.status === "done" || info.status === "failed") return info;
      if (Date.now() - started > maxWaitMs) {
        throw new ServiceError(408, "job polling timed out");
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
