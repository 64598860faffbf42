"""HTTP session service for interactive mask/prompt iteration.

Sessions live under state_dir/sessions/<id>/ as a record.json plus PNG
rasters and are reloaded on startup, so the service can be restarted
without losing accepted sets. Jobs are in-memory only: a queued job
does not survive a restart, its session record does.

Generation runs on a worker thread, one job in flight per session;
a second generate request while one is running gets a 409.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .backends import DEFAULT_NEGATIVE_TEXT, DiagInpaintBackend, GenerationTriplet, PromptSpec
from .classifier import TrainConfig
from .core import derive_torch_seed, load_mask_png, load_png, save_mask_png, save_png
from .diffusion import DenoisingDiffusion
from .exceptions import DiagforgeError
from .experiment import PretrainConfig, ScenarioConfig, run_scenario
from .manifest import load_manifest
from .metrics import TAP_DIMS, fid
from .synthetic import CorpusSpec
from .wire import decode_image_b64, decode_mask_b64, encode_image_b64, encode_mask_b64

PREVIEW_TAP = "pool64"


@dataclass
class ServiceConfig:
    """Filesystem root plus optional model/reference sources."""

    state_dir: str
    checkpoint: str | None = None
    reference_manifest: str | None = None
    default_guidance_scale: float = 80.0


class _SessionBody(BaseModel):
    image: str


class _MaskBody(BaseModel):
    mask: str


class _PromptBody(BaseModel):
    text: str
    negative_text: str = DEFAULT_NEGATIVE_TEXT
    guidance_scale: float | None = None


class _GenerateBody(BaseModel):
    mask_id: str | None = None
    prompt_id: str | None = None
    count: int = 1
    seed: int = 0


class _ExperimentBody(BaseModel):
    scenario: str = "zero_shot"
    strategy: str = "memseg_baseline"
    n_augs: list[int] = [100]
    seeds: list[int] = [0, 1, 2]
    corpus: dict = {}
    classifier: dict = {}
    pretrain: dict = {}


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(text)
    tmp.replace(path)


class _State:
    """All mutable service state, guarded by one lock.

    Generation itself runs outside the lock; only record mutation and
    the per-session in-flight flag are serialized.
    """

    def __init__(self, config: ServiceConfig, backend=None, reference=None):
        self.config = config
        self.root = Path(config.state_dir)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "experiments").mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.sessions: dict[str, dict] = {}
        self.jobs: dict[str, dict] = {}
        self.experiments: dict[str, dict] = {}
        self.busy: set[str] = set()
        self._backend = backend
        self._reference = reference
        for record_path in sorted(self.root.glob("sessions/*/record.json")):
            record = json.loads(record_path.read_text())
            self.sessions[record["id"]] = record

    def session_dir(self, sid: str) -> Path:
        return self.root / "sessions" / sid

    def persist(self, sid: str) -> None:
        d = self.session_dir(sid)
        d.mkdir(parents=True, exist_ok=True)
        _atomic_write(d / "record.json", json.dumps(self.sessions[sid], indent=1, sort_keys=True))

    def backend(self):
        if self._backend is None:
            if self.config.checkpoint is None:
                raise DiagforgeError("no generation backend configured (set checkpoint)")
            est = DenoisingDiffusion.load(self.config.checkpoint)
            self._backend = DiagInpaintBackend(est)
        return self._backend

    def reference_images(self):
        if self._reference is None:
            if self.config.reference_manifest is None:
                self._reference = []
            else:
                bundle = load_manifest(self.config.reference_manifest)
                self._reference = [s.image for s in bundle.test_pos]
        return self._reference


def _session_view(state: _State, record: dict) -> dict:
    """Inline-b64 view of a session record; POST and GET share it."""
    d = state.session_dir(record["id"])
    view = {
        "id": record["id"],
        "created": record["created"],
        "image": encode_image_b64(load_png(d / record["image"], channels=1)),
        "masks": [
            {"id": m["id"], "mask": encode_mask_b64(load_mask_png(d / m["file"]))}
            for m in record["masks"]
        ],
        "prompts": list(record["prompts"]),
        "candidates": [
            {
                "id": c["id"],
                "status": c["status"],
                "mask_id": c["mask_id"],
                "prompt_id": c["prompt_id"],
                "seed": c["seed"],
                "image": encode_image_b64(load_png(d / c["file"], channels=1)),
            }
            for c in record["candidates"]
        ],
        "accepted_count": sum(1 for c in record["candidates"] if c["status"] == "accepted"),
    }
    return view


def _get_session(state: _State, sid: str) -> dict:
    record = state.sessions.get(sid)
    if record is None:
        raise HTTPException(status_code=404, detail=f"unknown session {sid}")
    return record


def _run_generation(state: _State, sid: str, job_id: str, body: _GenerateBody) -> None:
    job = state.jobs[job_id]
    job["status"] = "running"
    try:
        record = state.sessions[sid]
        d = state.session_dir(sid)
        source = load_png(d / record["image"], channels=1)
        mask_entry = next(m for m in record["masks"] if m["id"] == body.mask_id)
        mask = load_mask_png(d / mask_entry["file"])
        prompt_entry = next(p for p in record["prompts"] if p["id"] == body.prompt_id)
        prompt = PromptSpec(
            positive_text=prompt_entry["text"],
            negative_text=prompt_entry["negative_text"],
            guidance_scale=prompt_entry["guidance_scale"],
        )
        triplets = [GenerationTriplet(negative=source, prompt=prompt, mask=mask) for _ in range(body.count)]
        gens = [
            torch.Generator().manual_seed(
                derive_torch_seed(body.seed, record["generation_counter"], k)
            )
            for k in range(body.count)
        ]
        images = state.backend().generate_batch(triplets, gens)
        with state.lock:
            ids = []
            for img in images:
                cid = f"c-{len(record['candidates']):04d}"
                fname = f"candidate-{cid}.png"
                save_png(img, d / fname)
                record["candidates"].append(
                    {
                        "id": cid,
                        "file": fname,
                        "status": "pending",
                        "mask_id": body.mask_id,
                        "prompt_id": body.prompt_id,
                        "seed": body.seed,
                    }
                )
                ids.append(cid)
            record["generation_counter"] += 1
            state.persist(sid)
            job["status"] = "done"
            job["result"] = {"candidate_ids": ids}
    except Exception as e:  # job boundary: report, never crash the worker
        job["status"] = "failed"
        job["error"] = str(e)
    finally:
        with state.lock:
            state.busy.discard(sid)


def _run_experiment(state: _State, eid: str, config: ScenarioConfig) -> None:
    entry = state.experiments[eid]
    try:
        table = run_scenario(config)
        report_path = state.root / "experiments" / eid / "report.json"
        table.save(report_path)
        entry["status"] = "done"
        entry["report"] = table.to_dict()
    except Exception as e:
        entry["status"] = "failed"
        entry["error"] = str(e)


def create_app(config: ServiceConfig, backend=None, reference=None) -> FastAPI:
    """Build the app; backend and reference are injectable for tests."""
    state = _State(config, backend=backend, reference=reference)
    app = FastAPI(title="diagforge session service")
    # The browser UI is served from its own dev server, so every fetch is
    # cross-origin. Single-user desk tool, no credentials: allow all.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.diagforge = state

    @app.post("/sessions", status_code=201)
    def create_session(body: _SessionBody):
        try:
            image = decode_image_b64(body.image, channels=1)
        except DiagforgeError as e:
            raise HTTPException(status_code=422, detail=str(e))
        sid = f"s-{uuid.uuid4().hex[:12]}"
        record = {
            "id": sid,
            "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "image": "source.png",
            "masks": [],
            "prompts": [],
            "candidates": [],
            "generation_counter": 0,
        }
        with state.lock:
            d = state.session_dir(sid)
            d.mkdir(parents=True, exist_ok=True)
            save_png(image, d / "source.png")
            state.sessions[sid] = record
            state.persist(sid)
            return _session_view(state, record)

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        with state.lock:
            return _session_view(state, _get_session(state, sid))

    @app.post("/sessions/{sid}/masks", status_code=201)
    def add_mask(sid: str, body: _MaskBody):
        try:
            mask = decode_mask_b64(body.mask)
        except DiagforgeError as e:
            raise HTTPException(status_code=422, detail=str(e))
        if mask.is_empty():
            raise HTTPException(status_code=422, detail="mask has no set pixels")
        with state.lock:
            record = _get_session(state, sid)
            source = load_png(state.session_dir(sid) / record["image"], channels=1)
            if mask.data.shape != source.data.shape[:2]:
                raise HTTPException(
                    status_code=422,
                    detail=f"mask shape {mask.data.shape} does not match image {source.data.shape[:2]}",
                )
            mid = f"m-{len(record['masks']):04d}"
            fname = f"mask-{mid}.png"
            save_mask_png(mask, state.session_dir(sid) / fname)
            record["masks"].append({"id": mid, "file": fname})
            state.persist(sid)
            return {"id": mid}

    @app.post("/sessions/{sid}/prompts", status_code=201)
    def add_prompt(sid: str, body: _PromptBody):
        if not body.text.strip():
            raise HTTPException(status_code=422, detail="prompt text must be non-empty")
        scale = body.guidance_scale
        if scale is None:
            scale = config.default_guidance_scale
        if scale < 0:
            raise HTTPException(status_code=422, detail="guidance_scale must be >= 0")
        with state.lock:
            record = _get_session(state, sid)
            pid = f"p-{len(record['prompts']):04d}"
            record["prompts"].append(
                {
                    "id": pid,
                    "text": body.text,
                    "negative_text": body.negative_text,
                    "guidance_scale": scale,
                }
            )
            state.persist(sid)
            return {"id": pid}

    @app.post("/sessions/{sid}/generate", status_code=202)
    def generate(sid: str, body: _GenerateBody):
        if body.count < 1 or body.count > 16:
            raise HTTPException(status_code=422, detail="count must be in 1..16")
        with state.lock:
            record = _get_session(state, sid)
            if not record["masks"]:
                raise HTTPException(status_code=422, detail="session has no masks")
            if not record["prompts"]:
                raise HTTPException(status_code=422, detail="session has no prompts")
            mask_id = body.mask_id or record["masks"][-1]["id"]
            prompt_id = body.prompt_id or record["prompts"][-1]["id"]
            if not any(m["id"] == mask_id for m in record["masks"]):
                raise HTTPException(status_code=422, detail=f"unknown mask {mask_id}")
            if not any(p["id"] == prompt_id for p in record["prompts"]):
                raise HTTPException(status_code=422, detail=f"unknown prompt {prompt_id}")
            if sid in state.busy:
                raise HTTPException(status_code=409, detail="a generation job is already running")
            state.busy.add(sid)
            job_id = f"j-{uuid.uuid4().hex[:12]}"
            state.jobs[job_id] = {"id": job_id, "session_id": sid, "status": "queued"}
        resolved = _GenerateBody(mask_id=mask_id, prompt_id=prompt_id, count=body.count, seed=body.seed)
        worker = threading.Thread(
            target=_run_generation, args=(state, sid, job_id, resolved), daemon=True
        )
        worker.start()
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return job

    def _adjudicate(sid: str, cid: str, status: str):
        with state.lock:
            record = _get_session(state, sid)
            entry = next((c for c in record["candidates"] if c["id"] == cid), None)
            if entry is None:
                raise HTTPException(status_code=404, detail=f"unknown candidate {cid}")
            if entry["status"] != "pending":
                raise HTTPException(status_code=409, detail=f"candidate already {entry['status']}")
            entry["status"] = status
            state.persist(sid)
            return {
                "id": cid,
                "status": status,
                "accepted_count": sum(1 for c in record["candidates"] if c["status"] == "accepted"),
            }

    @app.post("/sessions/{sid}/candidates/{cid}/accept")
    def accept_candidate(sid: str, cid: str):
        return _adjudicate(sid, cid, "accepted")

    @app.post("/sessions/{sid}/candidates/{cid}/reject")
    def reject_candidate(sid: str, cid: str):
        return _adjudicate(sid, cid, "rejected")

    @app.get("/sessions/{sid}/fid-preview")
    def fid_preview(sid: str):
        with state.lock:
            record = _get_session(state, sid)
            d = state.session_dir(sid)
            accepted = [
                load_png(d / c["file"], channels=1)
                for c in record["candidates"]
                if c["status"] == "accepted"
            ]
        reference = state.reference_images()
        dim = TAP_DIMS[PREVIEW_TAP]
        if len(accepted) <= dim or len(reference) <= dim:
            return {
                "status": "insufficient samples",
                "tap": PREVIEW_TAP,
                "accepted": len(accepted),
                "reference": len(reference),
                "required": dim + 1,
            }
        value = fid(accepted, reference, PREVIEW_TAP)
        return {
            "status": "ok",
            "tap": PREVIEW_TAP,
            "fid": value,
            "accepted": len(accepted),
            "reference": len(reference),
        }

    @app.post("/experiments", status_code=202)
    def post_experiment(body: _ExperimentBody):
        try:
            cfg = ScenarioConfig(
                scenario=body.scenario,
                strategy=body.strategy,
                n_augs=tuple(body.n_augs),
                seeds=tuple(body.seeds),
                corpus=CorpusSpec(**body.corpus),
                classifier=TrainConfig(**body.classifier),
                pretrain=PretrainConfig(**body.pretrain),
            )
        except (DiagforgeError, TypeError) as e:
            raise HTTPException(status_code=422, detail=str(e))
        eid = f"e-{uuid.uuid4().hex[:12]}"
        (state.root / "experiments" / eid).mkdir(parents=True, exist_ok=True)
        state.experiments[eid] = {"id": eid, "status": "running"}
        worker = threading.Thread(target=_run_experiment, args=(state, eid, cfg), daemon=True)
        worker.start()
        return {"experiment_id": eid}

    @app.get("/experiments/{eid}/report")
    def get_report(eid: str):
        entry = state.experiments.get(eid)
        if entry is None:
            report_path = state.root / "experiments" / eid / "report.json"
            if report_path.is_file():
                return {"status": "done", "report": json.loads(report_path.read_text())}
            raise HTTPException(status_code=404, detail=f"unknown experiment {eid}")
        out = {"status": entry["status"]}
        if entry["status"] == "done":
            out["report"] = entry["report"]
        if entry["status"] == "failed":
            out["error"] = entry["error"]
        return out

    return app
