import { ApiError, StudioApi } from "./api.js";
import type { CandidateEntry, SessionView } from "./api.js";
import { MaskLayer } from "./mask.js";
import { pollJob } from "./poller.js";
import {
  applyAdjudication,
  latestMaskId,
  sessionFromServer,
  type ClientSession,
} from "./state.js";

// The API base defaults to same-origin; ?api=http://host:port overrides it
// for development setups where the service runs elsewhere.
const apiBase = new URLSearchParams(window.location.search).get("api") ?? "";
const api = new StudioApi(apiBase);

let session: ClientSession | null = null;
let layer: MaskLayer | null = null;
let erasing = false;
let generating = false;
const adjudicating = new Set<string>();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const imageCanvas = el<HTMLCanvasElement>("image-canvas");
const overlayCanvas = el<HTMLCanvasElement>("overlay-canvas");
const maskStatus = el<HTMLDivElement>("mask-status");
const jobStatus = el<HTMLDivElement>("job-status");
const formError = el<HTMLDivElement>("form-error");

function setMaskStatus(text: string, isError = false): void {
  maskStatus.textContent = text;
  maskStatus.className = isError ? "status error" : "status";
}

function setJobStatus(text: string): void {
  jobStatus.textContent = text;
}

function redrawOverlay(): void {
  const ctx = overlayCanvas.getContext("2d");
  if (!ctx || !layer) return;
  const bin = layer.binarize();
  const img = ctx.createImageData(layer.width, layer.height);
  for (let i = 0; i < bin.length; i++) {
    if (bin[i]) {
      img.data[i * 4] = 255;
      img.data[i * 4 + 1] = 64;
      img.data[i * 4 + 2] = 64;
      img.data[i * 4 + 3] = 120;
    }
  }
  ctx.clearRect(0, 0, overlayCanvas.width, overlayCanvas.height);
  ctx.putImageData(img, 0, 0);
}

function drawSourceImage(b64: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => {
      imageCanvas.width = img.naturalWidth;
      imageCanvas.height = img.naturalHeight;
      overlayCanvas.width = img.naturalWidth;
      overlayCanvas.height = img.naturalHeight;
      imageCanvas.getContext("2d")?.drawImage(img, 0, 0);
      layer = new MaskLayer(img.naturalWidth, img.naturalHeight);
      redrawOverlay();
      resolve();
    };
    img.onerror = () => reject(new Error("could not decode session image"));
    img.src = `data:image/png;base64,${b64}`;
  });
}

function canvasPoint(e: PointerEvent): { x: number; y: number } {
  const rect = overlayCanvas.getBoundingClientRect();
  return {
    x: ((e.clientX - rect.left) * overlayCanvas.width) / rect.width,
    y: ((e.clientY - rect.top) * overlayCanvas.height) / rect.height,
  };
}

function brushRadius(): number {
  return Number(el<HTMLInputElement>("brush-radius").value);
}

function renderMaskList(): void {
  const list = el<HTMLUListElement>("mask-list");
  list.innerHTML = "";
  if (!session) return;
  for (const m of session.masks) {
    const item = document.createElement("li");
    item.textContent = m.id;
    list.appendChild(item);
  }
}

function candidateTile(c: CandidateEntry): HTMLDivElement {
  const tile = document.createElement("div");
  tile.className = `tile ${c.status}`;
  const img = document.createElement("img");
  img.src = `data:image/png;base64,${c.image}`;
  img.alt = c.id;
  tile.appendChild(img);

  const chip = document.createElement("span");
  chip.className = `chip ${c.status}`;
  chip.textContent = c.status;
  tile.appendChild(chip);

  if (c.status === "pending") {
    const row = document.createElement("div");
    row.className = "tile-actions";
    for (const decision of ["accept", "reject"] as const) {
      const btn = document.createElement("button");
      btn.textContent = decision;
      btn.disabled = adjudicating.has(c.id);
      btn.onclick = () => adjudicate(c.id, decision);
      row.appendChild(btn);
    }
    tile.appendChild(row);
  }
  return tile;
}

function renderGallery(): void {
  const gallery = el<HTMLDivElement>("gallery");
  gallery.innerHTML = "";
  if (!session) return;
  for (const c of session.candidates) {
    gallery.appendChild(candidateTile(c));
  }
  el<HTMLSpanElement>("accepted-count").textContent = String(session.acceptedCount);
}

function showJobError(message: string): void {
  const gallery = el<HTMLDivElement>("gallery");
  const chip = document.createElement("div");
  chip.className = "chip failed";
  chip.textContent = `generation failed: ${message}`;
  gallery.prepend(chip);
}

async function refreshFidPanel(): Promise<void> {
  if (!session) return;
  const panel = el<HTMLDivElement>("fid-panel");
  try {
    const preview = await api.fidPreview(session.id);
    if (preview.status === "ok") {
      panel.textContent =
        `FID (${preview.tap}): ${preview.fid!.toFixed(4)} — ` +
        `${preview.accepted} accepted vs ${preview.reference} reference`;
    } else {
      panel.textContent =
        `insufficient samples for ${preview.tap}: ` +
        `${preview.accepted}/${preview.required} accepted, ` +
        `${preview.reference}/${preview.required} reference`;
    }
  } catch (err) {
    panel.textContent = err instanceof Error ? err.message : "fid preview failed";
  }
}

async function setSession(view: SessionView): Promise<void> {
  session = sessionFromServer(view);
  window.location.hash = session.id;
  el<HTMLSpanElement>("session-label").textContent = session.id;
  await drawSourceImage(session.imageB64);
  renderMaskList();
  renderGallery();
  await refreshFidPanel();
}

async function adjudicate(cid: string, decision: "accept" | "reject"): Promise<void> {
  if (!session || adjudicating.has(cid)) return;
  adjudicating.add(cid);
  renderGallery(); // disables the buttons while the request is in flight
  try {
    const result = decision === "accept" ? await api.accept(session.id, cid) : await api.reject(session.id, cid);
    session = applyAdjudication(session, result);
    renderGallery();
    if (decision === "accept") {
      await refreshFidPanel();
    }
  } catch (err) {
    console.error("adjudication failed:", err);
    setJobStatus(err instanceof Error ? err.message : "adjudication failed");
  } finally {
    adjudicating.delete(cid);
    renderGallery();
  }
}

async function saveMask(): Promise<void> {
  if (!session || !layer) {
    setMaskStatus("load an image first", true);
    return;
  }
  if (layer.isEmpty()) {
    setMaskStatus("mask is empty — draw a region before saving", true);
    return;
  }
  try {
    const { id } = await api.addMask(session.id, layer.toPngB64());
    const view = await api.getSession(session.id);
    session = sessionFromServer(view);
    renderMaskList();
    setMaskStatus(`saved ${id}`);
  } catch (err) {
    setMaskStatus(err instanceof Error ? err.message : "mask upload failed", true);
  }
}

async function generate(): Promise<void> {
  formError.textContent = "";
  if (!session) return;
  if (generating) return; // one job in flight per session
  const text = el<HTMLInputElement>("positive-text").value;
  if (!text.trim()) {
    formError.textContent = "positive prompt must be non-empty";
    return;
  }
  const maskId = latestMaskId(session);
  if (!maskId) {
    formError.textContent = "save a mask before generating";
    return;
  }
  const negative = el<HTMLInputElement>("negative-text").value;
  const scale = Number(el<HTMLInputElement>("guidance-scale").value);
  const count = Number(el<HTMLInputElement>("count").value);
  const seed = Number(el<HTMLInputElement>("seed").value);

  generating = true;
  const button = el<HTMLButtonElement>("generate");
  button.disabled = true;
  try {
    const { id: promptId } = await api.addPrompt(session.id, {
      text,
      negative_text: negative,
      guidance_scale: Number.isFinite(scale) ? scale : undefined,
    });
    const { job_id } = await api.startGeneration(session.id, {
      mask_id: maskId,
      prompt_id: promptId,
      count,
      seed,
    });
    setJobStatus(`job ${job_id}: queued`);
    const job = await pollJob((jid) => api.getJob(jid), job_id, {
      onStatus: (status) => setJobStatus(`job ${job_id}: ${status}`),
    });
    if (job.status === "failed") {
      setJobStatus(`job ${job_id}: failed`);
      showJobError(job.error ?? "unknown error");
    } else {
      setJobStatus(`job ${job_id}: done`);
      const view = await api.getSession(session.id);
      session = sessionFromServer(view);
      renderGallery();
    }
  } catch (err) {
    const message = err instanceof ApiError ? err.message : "generation request failed";
    setJobStatus(message);
    console.error("generation failed:", err);
  } finally {
    generating = false;
    button.disabled = false;
  }
}

function wireCanvas(): void {
  let stroking = false;
  let last: { x: number; y: number } | null = null;

  overlayCanvas.addEventListener("pointerdown", (e) => {
    if (!layer) return;
    stroking = true;
    overlayCanvas.setPointerCapture(e.pointerId);
    last = canvasPoint(e);
    layer.applyStroke([last], brushRadius(), erasing);
    redrawOverlay();
  });
  overlayCanvas.addEventListener("pointermove", (e) => {
    if (!stroking || !layer || !last) return;
    const p = canvasPoint(e);
    layer.applyStroke([last, p], brushRadius(), erasing);
    last = p;
    redrawOverlay();
  });
  const end = () => {
    stroking = false;
    last = null;
  };
  overlayCanvas.addEventListener("pointerup", end);
  overlayCanvas.addEventListener("pointercancel", end);
}

function wireControls(): void {
  const drawBtn = el<HTMLButtonElement>("tool-draw");
  const eraseBtn = el<HTMLButtonElement>("tool-erase");
  const setTool = (erase: boolean) => {
    erasing = erase;
    drawBtn.classList.toggle("active", !erase);
    eraseBtn.classList.toggle("active", erase);
  };
  drawBtn.onclick = () => setTool(false);
  eraseBtn.onclick = () => setTool(true);
  setTool(false);

  el<HTMLButtonElement>("clear-mask").onclick = () => {
    layer?.clear();
    redrawOverlay();
    setMaskStatus("");
  };
  el<HTMLButtonElement>("save-mask").onclick = () => void saveMask();
  el<HTMLButtonElement>("generate").onclick = () => void generate();

  el<HTMLInputElement>("file-input").addEventListener("change", (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => {
      const dataUrl = reader.result as string;
      const b64 = dataUrl.slice(dataUrl.indexOf(",") + 1);
      api
        .createSession(b64)
        .then(setSession)
        .catch((err) => setMaskStatus(err instanceof Error ? err.message : "upload failed", true));
    };
    reader.readAsDataURL(file);
  });
}

async function init(): Promise<void> {
  wireCanvas();
  wireControls();
  const sid = window.location.hash.replace(/^#/, "");
  if (sid) {
    try {
      await setSession(await api.getSession(sid));
    } catch (err) {
      setMaskStatus(err instanceof Error ? err.message : "could not restore session", true);
      window.location.hash = "";
    }
  }
}

void init();
