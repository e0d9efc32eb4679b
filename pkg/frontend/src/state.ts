/**
 * Session state and its pure update/render functions.
 *
 * Everything the page shows is derived from one SessionState value via
 * renderModel(), so rendering stays a pure function of state and the
 * update functions return new states instead of mutating.
 */

import type { Box } from './coords.js';
import type { SegmentResponse } from './api.js';

export interface OverlaySettings {
  /** 0..1, 0 shows the base image only */
  maskOpacity: number;
  showSimilarity: boolean;
}

export interface HistoryEntry {
  prompt: string;
  /** box sent with the request, image pixel coords */
  box: Box;
  response: SegmentResponse;
  inferenceMs: number | null;
}

export interface SessionState {
  imageId: string | null;
  imageWidth: number;
  imageHeight: number;
  /** current box in image pixel coords (normalized before any request) */
  box: Box | null;
  /** append-only; the latest entry drives the overlay */
  history: readonly HistoryEntry[];
  settings: OverlaySettings;
  error: string | null;
  pending: boolean;
}

export const DEFAULT_SETTINGS: OverlaySettings = { maskOpacity: 0.55, showSimilarity: false };

export function createSession(settings: OverlaySettings = DEFAULT_SETTINGS): SessionState {
  return {
    imageId: null,
    imageWidth: 0,
    imageHeight: 0,
    box: null,
    history: [],
    settings,
    error: null,
    pending: false,
  };
}

/** A new image resets the box and history but keeps the user's settings. */
export function setImage(
  state: SessionState,
  imageId: string,
  width: number,
  height: number,
): SessionState {
  return { ...createSession(state.settings), imageId, imageWidth: width, imageHeight: height };
}

export function setBox(state: SessionState, box: Box | null): SessionState {
  return { ...state, box, error: null };
}

export function updateSettings(state: SessionState, patch: Partial<OverlaySettings>): SessionState {
  return { ...state, settings: { ...state.settings, ...patch } };
}

export function beginRequest(state: SessionState): SessionState {
  return { ...state, pending: true, error: null };
}

/** Append a completed segmentation; history is never rewritten. */
export function appendResult(state: SessionState, entry: HistoryEntry): SessionState {
  return { ...state, history: [...state.history, entry], pending: false, error: null };
}

/** Surface an API error inline; box and history stay intact. */
export function setError(state: SessionState, message: string): SessionState {
  return { ...state, pending: false, error: message };
}

export function latestResult(state: SessionState): HistoryEntry | null {
  return state.history.length ? state.history[state.history.length - 1]! : null;
}

/** What the canvas should composite, bottom to top. */
export interface RenderModel {
  layers: (
    | { kind: 'image' }
    | { kind: 'similarity'; png: string }
    | { kind: 'mask'; rleCounts: string; size: [number, number]; opacity: number }
    | { kind: 'box'; box: Box }
  )[];
  status: { prompt: string | null; error: string | null; pending: boolean };
}

export function renderModel(state: SessionState): RenderModel {
  const layers: RenderModel['layers'] = [];
  if (state.imageId !== null) layers.push({ kind: 'image' });
  const latest = latestResult(state);
  if (latest && state.settings.showSimilarity) {
    layers.push({ kind: 'similarity', png: latest.response.similarity_png });
  }
  if (latest && state.settings.maskOpacity > 0) {
    layers.push({
      kind: 'mask',
      rleCounts: latest.response.mask_rle.counts,
      size: latest.response.mask_rle.size,
      opacity: state.settings.maskOpacity,
    });
  }
  if (state.box) layers.push({ kind: 'box', box: state.box });
  return {
    layers,
    status: {
      prompt: latest ? latest.prompt : null,
      error: state.error,
      pending: state.pending,
    },
  };
}
