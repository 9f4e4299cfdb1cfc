"""Turn-based inference service: sessions hold belief state, turns refine it.

Plain request/response HTTP; each session's state mutates under its own lock
while model weights are shared read-only.  TurnResponse payloads carry no
timestamps, so identical (checkpoint, world, turns) replay byte-identically
across restarts.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import math
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from . import __version__
from .eval_metrics import GeodesicIndex, build_geodesic_index, snap_to_node
from .model import load_model
from .worldgen import (
    GenerationError,
    WorldMap,
    WorldParams,
    build_vocabulary,
    generate_world,
    rasterize,
    tokenize_turn,
)

TURN_CAP = 6
TOP_K = 3
NMS_RADIUS_PX = 8


class CreateSessionBody(BaseModel):
    worldId: str | None = None
    world: dict | None = None
    checkpointId: str | None = None
    variant: str | None = None


class TurnBody(BaseModel):
    locator: str
    observer: str


class GenerateWorldBody(BaseModel):
    seed: int
    params: dict | None = None


@dataclass
class Session:
    session_id: str
    world_id: str
    checkpoint_id: str
    created_at: float
    map_tensor: np.ndarray
    map_embedding: object  # cached V so turns never re-encode the map
    state: object
    turn_index: int = 0
    history: list[dict] = field(default_factory=list)
    status: str = "active"
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def _png_b64(array_u8: np.ndarray) -> str:
    img = Image.fromarray(array_u8)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _world_summary(world: WorldMap) -> dict:
    return {
        "worldId": world.world_id,
        "widthPx": world.width_px,
        "heightPx": world.height_px,
        "metersPerPixel": world.meters_per_pixel,
        "rooms": [{"roomId": r.room_id, "label": r.label} for r in world.rooms],
        "nodeCount": len(world.nodes),
    }


def _top_k_peaks(probs: np.ndarray, k: int, radius: float) -> list[tuple[int, int, float]]:
    """Greedy non-maximum suppression: k spatially distinct probability peaks."""
    work = probs.copy()
    h, w = work.shape
    ys, xs = np.mgrid[0:h, 0:w]
    peaks = []
    for _ in range(k):
        idx = int(work.argmax())
        r, c = divmod(idx, w)
        p = float(probs[r, c])
        if work[r, c] <= 0:
            break
        peaks.append((r, c, p))
        work[(ys - r) ** 2 + (xs - c) ** 2 <= radius**2] = -1.0
    return peaks


def _error(code: str, message: str, status: int) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def create_app(
    checkpoint: str | Path,
    worlds_dir: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    model, meta = load_model(checkpoint)
    checkpoint_hash = hashlib.sha256(Path(checkpoint).read_bytes()).hexdigest()[:12]
    checkpoint_id = f"{Path(checkpoint).stem}-{checkpoint_hash}"
    vocab = build_vocabulary()
    cfg = model.config

    worlds: dict[str, WorldMap] = {}
    indexes: dict[str, GeodesicIndex] = {}
    if worlds_dir is not None:
        for path in sorted(Path(worlds_dir).glob("*.json")):
            world = WorldMap.from_json(path.read_text(encoding="utf-8"))
            worlds[world.world_id] = world

    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    app = FastAPI(title="turn-based localizer service", version=__version__)

    def get_index(world_id: str) -> GeodesicIndex:
        if world_id not in indexes:
            indexes[world_id] = build_geodesic_index(worlds[world_id])
        return indexes[world_id]

    @app.exception_handler(HTTPException)
    async def handle_http(request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"code": "error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "version": __version__, "checkpointHash": checkpoint_hash}

    @app.get("/v1/checkpoints")
    def list_checkpoints():
        return {
            "checkpoints": [
                {
                    "checkpointId": checkpoint_id,
                    "variant": cfg.variant,
                    "step": meta.get("step"),
                    "configHash": meta.get("extra", {}).get("config_hash", ""),
                }
            ]
        }

    @app.get("/v1/worlds")
    def list_worlds():
        return {"worlds": [_world_summary(w) for _, w in sorted(worlds.items())]}

    @app.post("/v1/worlds/generate", status_code=201)
    def generate_world_endpoint(body: GenerateWorldBody):
        params = WorldParams(**(body.params or {}))
        try:
            world = generate_world(body.seed, params)
        except GenerationError as exc:
            raise _error("generation_failed", str(exc), 400)
        with registry_lock:
            worlds[world.world_id] = world
            indexes.pop(world.world_id, None)
        return {"world": world.to_json_dict(), "summary": _world_summary(world)}

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        if body.checkpointId is not None and body.checkpointId != checkpoint_id:
            raise _error("checkpoint_not_found", f"unknown checkpoint {body.checkpointId!r}", 404)
        if body.variant is not None and body.variant != cfg.variant:
            raise _error("variant_mismatch", f"loaded checkpoint is {cfg.variant!r}", 400)
        if body.world is not None:
            try:
                world = WorldMap.from_json_dict(body.world)
            except Exception as exc:
                raise _error("bad_world", f"inline world rejected: {exc}", 400)
            with registry_lock:
                worlds.setdefault(world.world_id, world)
        elif body.worldId is not None:
            world = worlds.get(body.worldId)
            if world is None:
                raise _error("world_not_found", f"unknown world {body.worldId!r}", 404)
        else:
            raise _error("bad_request", "worldId or inline world required", 400)

        map_tensor = rasterize(world, cfg.map_size)
        v = model.encode_map(map_tensor)
        state = model.init_state(v)
        session = Session(
            session_id=secrets.token_hex(16),
            world_id=world.world_id,
            checkpoint_id=checkpoint_id,
            created_at=time.time(),
            map_tensor=map_tensor,
            map_embedding=v,
            state=state,
        )
        with registry_lock:
            sessions[session.session_id] = session
        map_u8 = (map_tensor.transpose(1, 2, 0) * 255.0).round().astype(np.uint8)
        return {
            "sessionId": session.session_id,
            "mapImage": _png_b64(map_u8),
            "worldSummary": _world_summary(world),
        }

    def _get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise _error("session_not_found", f"unknown session {session_id!r}", 404)
        return session

    @app.post("/v1/sessions/{session_id}/turns")
    def submit_turn(session_id: str, body: TurnBody):
        session = _get_session(session_id)
        with session.lock:
            if session.status != "active":
                raise _error("session_closed", "session is closed", 409)
            if session.turn_index >= TURN_CAP:
                raise _error("turn_limit", f"turn cap of {TURN_CAP} reached", 422)
            world = worlds[session.world_id]
            ids = tokenize_turn((body.locator, body.observer), vocab, cfg.text_len)
            turn_emb = model.encode_dialog_turn(ids)
            mask = model.text_enc.token_mask(ids)
            if cfg.variant == "convBaseline":
                state, logits = model.step(session.map_embedding, session.state, turn_emb, mask)
            else:
                state = model.fuse_step(session.map_embedding, session.state, turn_emb, mask)
                logits = model.head(state)
            session.state = state
            session.turn_index += 1

            response = _turn_response(
                logits.value, session.turn_index, world, get_index(session.world_id)
            )
            session.history.append(
                {
                    "turnIndex": session.turn_index,
                    "locator": body.locator,
                    "observer": body.observer,
                    "response": response,
                }
            )
            return response

    def _turn_response(logits: np.ndarray, turn_index: int, world: WorldMap, index: GeodesicIndex) -> dict:
        flat = logits.astype(np.float64).reshape(-1)
        flat -= flat.max()
        probs = np.exp(flat)
        probs /= probs.sum()
        grid = probs.reshape(logits.shape)

        peaks = _top_k_peaks(grid, TOP_K, NMS_RADIUS_PX)
        top = []
        top_nodes = []
        for r, c, p in peaks:
            map_pixel = _to_map_pixel((r, c), logits.shape, world)
            node = snap_to_node(map_pixel, world)
            top_nodes.append(node)
            top.append(
                {
                    "pixel": [int(map_pixel[0]), int(map_pixel[1])],
                    "probability": round(p, 6),
                    "snappedNode": node,
                    "roomLabel": world.room_of_node(node).label,
                }
            )
        spread = 0.0
        for i in range(len(top_nodes)):
            for j in range(i + 1, len(top_nodes)):
                d = float(index.dist[top_nodes[i], top_nodes[j]])
                if math.isfinite(d):
                    spread = max(spread, d)

        rounded = np.round(grid, 4)
        residual = 1.0 - float(rounded.sum())
        peak_idx = np.unravel_index(int(grid.argmax()), grid.shape)
        rounded[peak_idx] = round(float(rounded[peak_idx]) + residual, 4)
        heat_u8 = np.round(grid / max(grid.max(), 1e-12) * 255.0).astype(np.uint8)

        return {
            "turnIndex": turn_index,
            "heatmap": {
                "height": int(grid.shape[0]),
                "width": int(grid.shape[1]),
                "values": [float(v) for v in rounded.reshape(-1)],
            },
            "heatmapImage": _png_b64(heat_u8),
            "topK": top,
            "confidenceAtTop1": top[0]["probability"] if top else 0.0,
            "geodesicSpreadMeters": round(spread, 4),
        }

    def _to_map_pixel(pixel: tuple[int, int], shape: tuple[int, int], world: WorldMap) -> tuple[int, int]:
        h0, w0 = shape
        r = round(pixel[0] * (world.height_px - 1) / (h0 - 1)) if h0 > 1 else 0
        c = round(pixel[1] * (world.width_px - 1) / (w0 - 1)) if w0 > 1 else 0
        return (int(r), int(c))

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        session = _get_session(session_id)
        with session.lock:
            return {
                "sessionId": session.session_id,
                "worldId": session.world_id,
                "checkpointId": session.checkpoint_id,
                "status": session.status,
                "createdAt": session.created_at,
                "turnIndex": session.turn_index,
                "history": session.history,
            }

    @app.delete("/v1/sessions/{session_id}")
    def close_session(session_id: str):
        session = _get_session(session_id)
        with session.lock:
            session.status = "closed"
        return {"sessionId": session_id, "status": "closed"}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app
