/**
 * DOM wiring: file upload, box dragging, prompt form, layer toggles.
 * All state flows through SessionController; this file only translates
 * events in and paints RenderModel out.
 */

import { ApiClient } from './api.js';
import { SessionController } from './controller.js';
import { ViewTransform, boxFromDrag, imageToCanvas, makeView } from './coords.js';
import { decodeMask } from './rle.js';
import { MASK_COLOR, maskToRGBA } from './overlay.js';
import {
  DEFAULT_SETTINGS,
  OverlaySettings,
  SessionState,
  createSession,
  latestResult,
  renderModel,
  setBox,
  setImage,
  updateSettings,
} from './state.js';

const SETTINGS_KEY = 'textseg.overlay';

function loadSettings(): OverlaySettings {
  try {
    const raw = localStorage.getItem(SETTINGS_KEY);
    return raw ? { ...DEFAULT_SETTINGS, ...JSON.parse(raw) } : DEFAULT_SETTINGS;
  } catch {
    return DEFAULT_SETTINGS;
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>('canvas');
const ctx = canvas.getContext('2d')!;
const fileInput = el<HTMLInputElement>('file');
const promptInput = el<HTMLInputElement>('prompt');
const form = el<HTMLFormElement>('prompt-form');
const opacitySlider = el<HTMLInputElement>('opacity');
const similarityToggle = el<HTMLInputElement>('show-similarity');
const zoomSelect = el<HTMLSelectElement>('zoom');
const historyList = el<HTMLUListElement>('history');
const errorBox = el<HTMLDivElement>('error');
const statusLine = el<HTMLDivElement>('status');

const api = new ApiClient('');
const controller = new SessionController(api, createSession(loadSettings()));

let baseImage: HTMLImageElement | null = null;
let view: ViewTransform = makeView(1);
let dragStart: { x: number; y: number } | null = null;
let dragPreview: { x: number; y: number } | null = null;
const decodedSimilarity = new Map<string, HTMLImageElement>();

opacitySlider.value = String(controller.current.settings.maskOpacity);
similarityToggle.checked = controller.current.settings.showSimilarity;

function persistSettings(s: OverlaySettings): void {
  try {
    localStorage.setItem(SETTINGS_KEY, JSON.stringify(s));
  } catch {
    /* private mode etc. — settings just won't stick */
  }
}

function canvasPoint(e: PointerEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return { x: e.clientX - rect.left, y: e.clientY - rect.top };
}

fileInput.addEventListener('change', async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    const { image_id } = await api.uploadImage(file, file.type || 'image/png');
    const img = new Image();
    img.onload = () => {
      baseImage = img;
      decodedSimilarity.clear();
      view = makeView(Number(zoomSelect.value) || 1);
      canvas.width = Math.round(img.naturalWidth * view.zoom);
      canvas.height = Math.round(img.naturalHeight * view.zoom);
      controller.update(setImage(controller.current, image_id, img.naturalWidth, img.naturalHeight));
    };
    img.src = URL.createObjectURL(file);
  } catch (err) {
    errorBox.textContent = String(err instanceof Error ? err.message : err);
  }
});

zoomSelect.addEventListener('change', () => {
  view = makeView(Number(zoomSelect.value) || 1);
  if (baseImage) {
    canvas.width = Math.round(baseImage.naturalWidth * view.zoom);
    canvas.height = Math.round(baseImage.naturalHeight * view.zoom);
  }
  paint(controller.current);
});

canvas.addEventListener('pointerdown', (e) => {
  if (!baseImage) return;
  canvas.setPointerCapture(e.pointerId);
  dragStart = canvasPoint(e);
  dragPreview = dragStart;
});

canvas.addEventListener('pointermove', (e) => {
  if (!dragStart) return;
  dragPreview = canvasPoint(e);
  paint(controller.current);
});

canvas.addEventListener('pointerup', (e) => {
  if (!dragStart) return;
  const state = controller.current;
  const box = boxFromDrag(view, dragStart, canvasPoint(e), state.imageWidth, state.imageHeight);
  dragStart = null;
  dragPreview = null;
  if (box === null) {
    canvas.classList.add('flash'); // zero-area cue
    setTimeout(() => canvas.classList.remove('flash'), 400);
    paint(state);
    return;
  }
  controller.update(setBox(state, box));
});

form.addEventListener('submit', (e) => {
  e.preventDefault();
  void controller.submitPrompt(promptInput.value);
});

opacitySlider.addEventListener('input', () => {
  const next = updateSettings(controller.current, { maskOpacity: Number(opacitySlider.value) });
  persistSettings(next.settings);
  controller.update(next);
});

similarityToggle.addEventListener('change', () => {
  const next = updateSettings(controller.current, { showSimilarity: similarityToggle.checked });
  persistSettings(next.settings);
  controller.update(next);
});

function similarityImage(png: string): HTMLImageElement {
  let img = decodedSimilarity.get(png);
  if (!img) {
    img = new Image();
    img.onload = () => paint(controller.current);
    img.src = `data:image/png;base64,${png}`;
    decodedSimilarity.set(png, img);
  }
  return img;
}

function paint(state: SessionState): void {
  const model = renderModel(state);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (const layer of model.layers) {
    if (layer.kind === 'image' && baseImage) {
      ctx.drawImage(baseImage, view.offsetX, view.offsetY,
        baseImage.naturalWidth * view.zoom, baseImage.naturalHeight * view.zoom);
    } else if (layer.kind === 'similarity') {
      const img = similarityImage(layer.png);
      if (img.complete && img.naturalWidth) {
        ctx.globalAlpha = 0.8;
        ctx.drawImage(img, view.offsetX, view.offsetY,
          img.naturalWidth * view.zoom, img.naturalHeight * view.zoom);
        ctx.globalAlpha = 1;
      }
    } else if (layer.kind === 'mask') {
      const mask = decodeMask({ size: layer.size, counts: layer.rleCounts });
      const buf = maskToRGBA(mask, MASK_COLOR, layer.opacity);
      const off = document.createElement('canvas');
      off.width = mask.width;
      off.height = mask.height;
      off.getContext('2d')!.putImageData(new ImageData(buf, mask.width, mask.height), 0, 0);
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(off, view.offsetX, view.offsetY, mask.width * view.zoom, mask.height * view.zoom);
      ctx.imageSmoothingEnabled = true;
    } else if (layer.kind === 'box') {
      const [x0, y0, x1, y1] = layer.box;
      const a = imageToCanvas(view, { x: x0, y: y0 });
      const b = imageToCanvas(view, { x: x1, y: y1 });
      ctx.strokeStyle = '#f59e0b';
      ctx.lineWidth = 2;
      ctx.strokeRect(a.x, a.y, b.x - a.x, b.y - a.y);
    }
  }
  if (dragStart && dragPreview) {
    ctx.strokeStyle = 'rgba(245, 158, 11, 0.6)';
    ctx.setLineDash([4, 3]);
    ctx.strokeRect(dragStart.x, dragStart.y, dragPreview.x - dragStart.x, dragPreview.y - dragStart.y);
    ctx.setLineDash([]);
  }

  errorBox.textContent = model.status.error ?? '';
  statusLine.textContent = model.status.pending
    ? 'segmenting...'
    : model.status.prompt
      ? `latest prompt: ${model.status.prompt}`
      : 'upload an image, drag a box, type a prompt';

  historyList.replaceChildren(
    ...state.history.map((entry, i) => {
      const li = document.createElement('li');
      const score = entry.response.best_head_score;
      li.textContent = `${i + 1}. "${entry.prompt}"${score !== null ? ` (head score ${score.toFixed(3)})` : ''}`;
      if (i === state.history.length - 1) li.classList.add('latest');
      li.addEventListener('click', () => {
        promptInput.value = entry.prompt;
      });
      return li;
    }),
  );
}

controller.onChange(paint);
paint(controller.current);

void api
  .health()
  .then((h) => {
    statusLine.textContent = `model ${h.fingerprint.slice(0, 12)} ready (${h.version})`;
  })
  .catch(() => {
    errorBox.textContent = 'service unreachable — start it with uvicorn first';
  });

export { controller, latestResult };
