/**
 * Prompt submission flow: one in-flight segment request per session,
 * newer submissions cancel the pending one, and every outcome lands in
 * SessionState (no page reloads anywhere).
 */

import { ApiClient, ApiError } from './api.js';
import {
  SessionState,
  appendResult,
  beginRequest,
  setError,
} from './state.js';

export class SessionController {
  private state: SessionState;
  private inflight: AbortController | null = null;
  private listeners: ((s: SessionState) => void)[] = [];

  constructor(
    private readonly api: ApiClient,
    initial: SessionState,
  ) {
    this.state = initial;
  }

  get current(): SessionState {
    return this.state;
  }

  onChange(fn: (s: SessionState) => void): void {
    this.listeners.push(fn);
  }

  update(next: SessionState): void {
    this.state = next;
    for (const fn of this.listeners) fn(next);
  }

  /** Submit the prompt against the current box; resolves once settled. */
  async submitPrompt(prompt: string): Promise<void> {
    const { imageId, box } = this.state;
    if (!imageId) {
      this.update(setError(this.state, 'load an image first'));
      return;
    }
    if (!box) {
      this.update(setError(this.state, 'draw a box first'));
      return;
    }
    if (!prompt.trim()) {
      this.update(setError(this.state, 'prompt must not be empty'));
      return;
    }
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    this.update(beginRequest(this.state));
    try {
      const response = await this.api.segment(
        { image_id: imageId, prompt, box },
        controller.signal,
      );
      if (controller.signal.aborted) return; // a newer submission took over
      this.update(appendResult(this.state, { prompt, box, response, inferenceMs: null }));
    } catch (err) {
      if (controller.signal.aborted) return; // cancelled on purpose, stay quiet
      const message = err instanceof ApiError ? err.message : `request failed: ${String(err)}`;
      this.update(setError(this.state, message));
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }
}
