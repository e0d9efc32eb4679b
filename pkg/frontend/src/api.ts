import type { RLE } from './rle.js';

export interface SegmentRequest {
  image_id: string;
  prompt: string;
  box?: [number, number, number, number];
  threshold?: number;
  normalization?: string;
}

export interface SegmentResponse {
  mask_rle: RLE;
  /** base64 PNG, grayscale similarity heat map at image resolution */
  similarity_png: string;
  best_head_score: number | null;
  best_head_index: number | null;
  height: number;
  width: number;
  prompt: string;
}

export interface HealthResponse {
  status: string;
  fingerprint: string;
  checkpoint: string | null;
  version: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

/** Fetch-shaped function so tests can swap in a mock server. */
export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(`${this.base}${path}`, init);
    if (!res.ok) {
      const body = await res.json().catch(() => ({}) as Record<string, unknown>);
      const detail = typeof body.detail === 'string' ? body.detail : `HTTP ${res.status}`;
      throw new ApiError(res.status, detail);
    }
    return res.json() as Promise<T>;
  }

  /** Raw PNG/JPEG body in, content-addressed id out. */
  uploadImage(data: Blob | ArrayBuffer, contentType: string): Promise<{ image_id: string }> {
    return this.request('/v1/images', {
      method: 'POST',
      headers: { 'Content-Type': contentType },
      body: data,
    });
  }

  segment(req: SegmentRequest, signal?: AbortSignal): Promise<SegmentResponse> {
    return this.request('/v1/segment', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(req),
      signal,
    });
  }

  health(): Promise<HealthResponse> {
    return this.request('/v1/health');
  }
}
