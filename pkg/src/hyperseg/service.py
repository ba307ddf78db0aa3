"""Interactive segmentation sessions over HTTP/JSON.

A session pins one checkpoint and one current/previous frame pair. Features
are extracted once per frame and cached on disk; every click recomputes the
diffusion maps and re-runs only the (cheap) segmentation network against the
cached features, so the click loop stays interactive. Session state lives in
a directory per session (frames, clicks JSON, cached feature tensor), so the
service restarts cleanly; a byte budget evicts the least-recently-used
sessions.

Proposals depend only on (frame, click set, checkpoint): click arrival order
never changes the response bytes.
"""

from __future__ import annotations

import base64
import json
import os
import shutil
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .clicks import ClickState, clicks_from_json, clicks_to_json
from .network import rank_heads
from .pipeline import Pipeline
from .pngio import decode_image_png, encode_mask_png, load_image_png, save_image_png
from .tensors import load_tensor, save_tensor, tensor_to_bytes
from .tucker import FeatureStack


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _bad_request(message):
    return ServiceError(400, "bad_request", message)


def _not_found(message):
    return ServiceError(404, "not_found", message)


@dataclass
class Session:
    session_id: str
    checkpoint: str
    width: int
    height: int
    frame_curr: np.ndarray
    frame_prev: np.ndarray
    features: FeatureStack
    clicks: ClickState
    click_order: list  # (x, y, polarity) in arrival order, for undo
    created: float
    updated: float
    proposals: object = None  # cached SegmentationProposals
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """Directory-backed session store with LRU byte-budget eviction."""

    def __init__(self, root, byte_budget: int = 512 * 1024 * 1024):
        self.root = root
        self.byte_budget = byte_budget
        self._sessions = {}
        self._guard = threading.Lock()
        os.makedirs(root, exist_ok=True)

    def _dir(self, session_id: str) -> str:
        return os.path.join(self.root, session_id)

    def persist(self, s: Session) -> None:
        d = self._dir(s.session_id)
        os.makedirs(d, exist_ok=True)
        save_image_png(os.path.join(d, "frame.png"), s.frame_curr)
        save_image_png(os.path.join(d, "prev.png"), s.frame_prev)
        save_tensor(os.path.join(d, "features.hseg"), s.features.features)
        meta = {
            "session_id": s.session_id,
            "checkpoint": s.checkpoint,
            "width": s.width,
            "height": s.height,
            "provenance": list(s.features.provenance),
            "clicks": json.loads(clicks_to_json(s.clicks)),
            "click_order": [list(c) for c in s.click_order],
            "created": s.created,
            "updated": s.updated,
        }
        with open(os.path.join(d, "session.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)

    def load_from_disk(self, session_id: str) -> Session:
        d = self._dir(session_id)
        with open(os.path.join(d, "session.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        clicks = clicks_from_json(json.dumps(meta["clicks"]), meta["width"], meta["height"])
        feats = load_tensor(os.path.join(d, "features.hseg"))
        features = FeatureStack(feats, feats.shape[0], tuple(meta["provenance"]))
        return Session(
            session_id=session_id,
            checkpoint=meta["checkpoint"],
            width=meta["width"],
            height=meta["height"],
            frame_curr=load_image_png(os.path.join(d, "frame.png")),
            frame_prev=load_image_png(os.path.join(d, "prev.png")),
            features=features,
            clicks=clicks,
            click_order=[tuple(c) for c in meta["click_order"]],
            created=meta["created"],
            updated=meta["updated"],
        )

    def get(self, session_id: str) -> Session:
        with self._guard:
            s = self._sessions.get(session_id)
            if s is not None:
                return s
        if os.path.isdir(self._dir(session_id)):
            s = self.load_from_disk(session_id)
            with self._guard:
                return self._sessions.setdefault(session_id, s)
        raise _not_found(f"session {session_id} does not exist")

    def put(self, s: Session) -> None:
        with self._guard:
            self._sessions[s.session_id] = s
        self.persist(s)
        self.evict_to_budget(keep=s.session_id)

    def delete(self, session_id: str) -> None:
        with self._guard:
            self._sessions.pop(session_id, None)
        d = self._dir(session_id)
        if os.path.isdir(d):
            shutil.rmtree(d)

    def ids(self):
        on_disk = [n for n in sorted(os.listdir(self.root)) if os.path.isdir(self._dir(n))]
        return on_disk

    def _disk_usage(self, session_id: str) -> int:
        total = 0
        d = self._dir(session_id)
        for name in os.listdir(d):
            total += os.path.getsize(os.path.join(d, name))
        return total

    def evict_to_budget(self, keep: str = None) -> None:
        entries = []
        for sid in self.ids():
            try:
                with open(os.path.join(self._dir(sid), "session.json"), encoding="utf-8") as fh:
                    updated = json.load(fh).get("updated", 0.0)
            except OSError:
                updated = 0.0
            entries.append((updated, sid))
        total = sum(self._disk_usage(sid) for _, sid in entries)
        for updated, sid in sorted(entries):
            if total <= self.byte_budget:
                break
            if sid == keep:
                continue
            total -= self._disk_usage(sid)
            self.delete(sid)


def _decode_frame(payload_b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(payload_b64, validate=True)
        return decode_image_png(raw)
    except Exception as exc:
        raise _bad_request(f"frame is not decodable base64 PNG: {exc}") from exc


def create_app(checkpoint_root, store_dir, byte_budget: int = 512 * 1024 * 1024,
               ui_dir=None) -> FastAPI:
    """Build the service around a checkpoint root.

    ``checkpoint_root`` either is a checkpoint directory (containing
    ``config.json``) or holds one subdirectory per named checkpoint.
    """
    checkpoints = {}
    if os.path.isfile(os.path.join(checkpoint_root, "config.json")):
        name = os.path.basename(os.path.normpath(checkpoint_root))
        checkpoints[name] = checkpoint_root
    else:
        for name in sorted(os.listdir(checkpoint_root)):
            if os.path.isfile(os.path.join(checkpoint_root, name, "config.json")):
                checkpoints[name] = os.path.join(checkpoint_root, name)
    if not checkpoints:
        raise ValueError(f"no checkpoints under {checkpoint_root!r}")

    pipelines = {}
    pipelines_guard = threading.Lock()

    def pipeline_for(name: str) -> Pipeline:
        if name not in checkpoints:
            raise _not_found(f"unknown checkpoint {name!r}")
        with pipelines_guard:
            if name not in pipelines:
                pipelines[name] = Pipeline.from_checkpoint(checkpoints[name])
            return pipelines[name]

    store = SessionStore(store_dir, byte_budget)
    app = FastAPI(title="hyperseg session service")
    # the click UI may be served from any static host
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    def run_proposals(s: Session):
        """(Re)compute proposals from the session state; cached per state."""
        if s.proposals is None:
            pipe = pipeline_for(s.checkpoint)
            s.proposals = pipe.segment(s.frame_curr, s.frame_prev, s.clicks, features=s.features)
        return s.proposals

    def proposals_payload(s: Session) -> dict:
        prop = run_proposals(s)
        order = rank_heads(prop)
        return {
            "proposals": [
                {"head": m, "iou_rank": order.index(m) + 1} for m in range(1, prop.num_heads + 1)
            ],
            "default_head": order[0],
            "num_clicks": len(s.clicks.positive_clicks) + len(s.clicks.negative_clicks),
        }

    @app.get("/v1/checkpoints")
    def list_checkpoints():
        return {"checkpoints": sorted(checkpoints)}

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.json()
        if "frame_png_base64" not in body:
            raise _bad_request("frame_png_base64 is required")
        name = body.get("checkpoint") or next(iter(sorted(checkpoints)))
        pipe = pipeline_for(name)
        frame = _decode_frame(body["frame_png_base64"])
        prev = (
            _decode_frame(body["prev_frame_png_base64"])
            if body.get("prev_frame_png_base64")
            else frame.copy()
        )
        if prev.shape != frame.shape:
            raise _bad_request("previous frame extents differ from the current frame")
        w, h = frame.shape[1:]
        now = time.time()
        s = Session(
            session_id=uuid.uuid4().hex,
            checkpoint=name,
            width=w,
            height=h,
            frame_curr=frame,
            frame_prev=prev,
            features=pipe.extract(frame),
            clicks=ClickState.empty(w, h),
            click_order=[],
            created=now,
            updated=now,
        )
        store.put(s)
        return {
            "session_id": s.session_id,
            "width": w,
            "height": h,
            "num_heads": pipe.num_heads,
            "checkpoint": name,
        }

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        s = store.get(session_id)
        with s.lock:
            return {
                "session_id": s.session_id,
                "checkpoint": s.checkpoint,
                "width": s.width,
                "height": s.height,
                "clicks": json.loads(clicks_to_json(s.clicks)),
                "click_order": [list(c) for c in s.click_order],
                "num_heads": pipeline_for(s.checkpoint).num_heads,
                "created": s.created,
                "updated": s.updated,
            }

    @app.delete("/v1/sessions/{session_id}")
    def delete_session(session_id: str):
        store.get(session_id)
        store.delete(session_id)
        return {"deleted": session_id}

    @app.post("/v1/sessions/{session_id}/clicks")
    async def add_click(session_id: str, request: Request):
        body = await request.json()
        s = store.get(session_id)
        with s.lock:
            try:
                x, y = int(body["x"]), int(body["y"])
            except (KeyError, TypeError, ValueError):
                raise _bad_request("click body must carry integer x and y")
            polarity = body.get("polarity")
            if polarity not in ("pos", "neg"):
                raise _bad_request("polarity must be 'pos' or 'neg'")
            if not (0 <= x < s.width and 0 <= y < s.height):
                raise _bad_request(f"click ({x}, {y}) outside {s.width}x{s.height} frame")
            point = (x, y)
            existing = set(s.clicks.positive_clicks) | set(s.clicks.negative_clicks)
            duplicate = False
            if point in existing:
                same = point in (
                    s.clicks.positive_clicks if polarity == "pos" else s.clicks.negative_clicks
                )
                if same:
                    duplicate = True  # set semantics: no-op
                else:
                    raise ServiceError(
                        409, "conflict", f"pixel ({x}, {y}) already carries the other polarity"
                    )
            if not duplicate:
                s.clicks = s.clicks.with_click(x, y, polarity)
                s.click_order.append((x, y, polarity))
                s.proposals = None
                s.updated = time.time()
                store.persist(s)
            payload = proposals_payload(s)
            payload["duplicate"] = duplicate
            return payload

    @app.delete("/v1/sessions/{session_id}/clicks/{point}")
    def remove_click(session_id: str, point: str):
        s = store.get(session_id)
        with s.lock:
            try:
                x_str, y_str = point.split(",")
                x, y = int(x_str), int(y_str)
            except ValueError:
                raise _bad_request("click path segment must be '<x>,<y>'")
            hit = [(cx, cy) for cx, cy in s.clicks.positive_clicks + s.clicks.negative_clicks
                   if (cx, cy) == (x, y)]
            if not hit:
                raise _not_found(f"no click at ({x}, {y})")
            s.clicks = s.clicks.without_click(x, y)
            s.click_order = [c for c in s.click_order if (c[0], c[1]) != (x, y)]
            s.proposals = None
            s.updated = time.time()
            store.persist(s)
            return proposals_payload(s)

    @app.post("/v1/sessions/{session_id}/frame")
    async def advance_frame(session_id: str, request: Request):
        body = await request.json()
        if "frame_png_base64" not in body:
            raise _bad_request("frame_png_base64 is required")
        s = store.get(session_id)
        with s.lock:
            frame = _decode_frame(body["frame_png_base64"])
            pipe = pipeline_for(s.checkpoint)
            s.frame_prev = s.frame_curr
            s.frame_curr = frame
            s.width, s.height = frame.shape[1:]
            if s.frame_prev.shape != frame.shape:
                # frame sizes may change between clips; previous falls back to
                # a duplicate so the temporal pair stays congruent
                s.frame_prev = frame.copy()
            s.features = pipe.extract(frame)
            s.clicks = ClickState.empty(s.width, s.height)
            s.click_order = []
            s.proposals = None
            s.updated = time.time()
            store.persist(s)
            return {
                "session_id": s.session_id,
                "width": s.width,
                "height": s.height,
                "clicks": [],
                "feature_provenance": list(s.features.provenance),
            }

    @app.get("/v1/sessions/{session_id}/mask")
    def get_mask(session_id: str, head: int = Query(1), format: str = Query("png")):
        s = store.get(session_id)
        with s.lock:
            prop = run_proposals(s)
            if not 1 <= head <= prop.num_heads:
                raise _bad_request(f"head {head} out of [1, {prop.num_heads}]")
            if format == "png":
                payload = encode_mask_png(prop.binary_masks[head - 1])
                return Response(content=payload, media_type="image/png")
            if format == "tensor":
                payload = tensor_to_bytes(prop.soft_maps[head - 1])
                return Response(content=payload, media_type="application/octet-stream")
            raise _bad_request(f"unknown mask format {format!r}")

    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def run_server(checkpoint_root, store_dir, port: int = 8000, host: str = "127.0.0.1",
               byte_budget: int = 512 * 1024 * 1024, ui_dir=None):
    import uvicorn

    app = create_app(checkpoint_root, store_dir, byte_budget, ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
