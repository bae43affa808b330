"""HTTP surface for the state substrate: /post, /go, /state, /upload.

Request bodies are parsed strictly (no NaN/Infinity, no duplicate
record keys) and every response body is rendered deterministically, so
repeated reads of an unchanged session are byte-identical. The service
is same-origin and unauthenticated; session scoping rides entirely on
the ``sid`` query parameter.
"""

from __future__ import annotations

import json
import logging
import threading

from fastapi import FastAPI, Request, Response

from .diff_engine import DEFAULT_MASK_PATTERNS, VolatileMask, compute_diff
from .session_store import (
    MERGE,
    SET_CURRENT,
    QuotaExceeded,
    SessionError,
    SessionStore,
    valid_sid,
)
from .state_document import DIGEST_ALGORITHM, StateValidationError, parse_state

logger = logging.getLogger(__name__)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8080
GC_INTERVAL_SECONDS = 60.0


def _json_response(payload: dict, status_code: int = 200) -> Response:
    return Response(
        content=json.dumps(payload, ensure_ascii=False, separators=(",", ":")),
        status_code=status_code,
        media_type="application/json",
    )


def _post_error(message: str, status_code: int = 400) -> Response:
    return _json_response({"success": False, "error": message}, status_code)


def _error(message: str, status_code: int = 400) -> Response:
    return _json_response({"error": message}, status_code)


def create_app(
    store: SessionStore,
    mask: VolatileMask | None = None,
) -> FastAPI:
    if mask is None:
        mask = VolatileMask.from_texts(DEFAULT_MASK_PATTERNS)
    app = FastAPI(title="gymsmith state service", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.mask = mask

    @app.post("/post")
    async def handle_post(request: Request) -> Response:
        sid = request.query_params.get("sid")
        if not sid or not valid_sid(sid):
            return _post_error("missing or invalid sid query parameter")
        raw = await request.body()
        try:
            body = parse_state(raw)
        except StateValidationError as exc:
            return _post_error(f"malformed body: {exc}")
        if not isinstance(body, dict):
            return _post_error("body must be a JSON object")
        action = body.get("action")
        if not isinstance(action, str):
            return _post_error("missing action field")
        state = body.get("state")
        # The standalone merge flag is an accepted alias for the merge action.
        if action == SET_CURRENT and body.get("merge") is True:
            action = MERGE
        try:
            result = store.apply_action(sid, action, state)
        except SessionError as exc:
            return _post_error(str(exc))
        return _json_response(
            {"success": True, "sid": result.sid, "state_id": result.state_id}
        )

    @app.get("/go")
    async def handle_go(request: Request) -> Response:
        sid = request.query_params.get("sid")
        if not sid or not valid_sid(sid):
            return _error("missing or invalid sid query parameter")
        session = store.get_or_create(sid)
        with session.lock:
            initial = session.initial_snapshot
            current = session.current_snapshot
        base = store.seed_state if initial is None else initial
        report = compute_diff(base, current, mask)
        return _json_response(
            {
                "initial_state": initial,
                "current_state": current,
                "state_diff": report.to_wire(),
            }
        )

    @app.get("/state")
    async def handle_state(request: Request) -> Response:
        sid = request.query_params.get("sid")
        if not sid or not valid_sid(sid):
            return _error("missing or invalid sid query parameter")
        session = store.get_or_create(sid)
        with session.lock:
            current = session.current_snapshot
            custom = session.has_custom_state
        return _json_response(
            {"stored_state": current, "has_custom_state": custom, "sid": sid}
        )

    @app.post("/upload")
    async def handle_upload(request: Request) -> Response:
        sid = request.query_params.get("sid")
        if not sid or not valid_sid(sid):
            return _error("missing or invalid sid query parameter")
        form = await request.form()
        parts = [value for _, value in form.multi_items() if hasattr(value, "read")]
        if not parts:
            return _error("multipart body must contain at least one file part")
        stored = []
        for part in parts:
            content = await part.read()
            try:
                ref = store.store_upload(
                    sid,
                    part.filename or "",
                    content,
                    part.content_type or "application/octet-stream",
                )
            except QuotaExceeded as exc:
                return _error(str(exc), status_code=413)
            except SessionError as exc:
                return _error(str(exc))
            stored.append({"name": ref.name, "url": ref.url, "size": ref.size})
        return _json_response({"files": stored})

    @app.get("/uploads/{sid}/{name}")
    async def serve_upload(sid: str, name: str, request: Request) -> Response:
        context_sid = request.query_params.get("sid")
        if context_sid is not None and context_sid != sid:
            return _error("upload not found", status_code=404)
        upload = store.get_upload(sid, name)
        if upload is None:
            return _error("upload not found", status_code=404)
        return Response(content=upload.content, media_type=upload.media_type)

    return app


def start_gc_thread(
    store: SessionStore, interval: float = GC_INTERVAL_SECONDS
) -> threading.Event:
    """Collect expired sessions periodically until the returned event is set."""
    stop = threading.Event()

    def loop() -> None:
        while not stop.wait(interval):
            removed = store.gc_expired()
            if removed:
                logger.info("gc: removed %d expired sessions", removed)

    threading.Thread(target=loop, name="gymsmith-gc", daemon=True).start()
    return stop


def serve(
    store: SessionStore,
    mask: VolatileMask | None = None,
    host: str = DEFAULT_HOST,
    port: int = DEFAULT_PORT,
    gc_interval: float = GC_INTERVAL_SECONDS,
) -> None:
    """Run the service until SIGINT/SIGTERM; in-flight requests drain."""
    import uvicorn

    app = create_app(store, mask)
    logger.info(
        "state service on %s:%d (digest=%s, ttl=%.0fs)",
        host,
        port,
        DIGEST_ALGORITHM,
        store.ttl,
    )
    stop_gc = start_gc_thread(store, gc_interval)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        stop_gc.set()
