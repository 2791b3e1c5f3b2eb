"""HTTP API over a SessionStore, plus static hosting for the annotation UI."""

from __future__ import annotations

import logging
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .annotation import (
    AlreadyJudged,
    SessionStore,
    UnknownAnnotator,
    UnknownTask,
    next_task,
)

log = logging.getLogger(__name__)


def create_app(store: SessionStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="pairwise review annotation")
    session = store.session

    def _check_session(session_id: str) -> None:
        if session_id != session.session_id:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")

    @app.get("/session/{session_id}/next")
    def get_next(session_id: str, annotator: str):
        _check_session(session_id)
        try:
            task = next_task(session, annotator)
            progress = store.progress(annotator)
        except UnknownAnnotator:
            raise HTTPException(status_code=404, detail=f"unknown annotator {annotator!r}")
        if task is None:
            return {"done": True, "judged": progress["judged"], "total": progress["total"]}
        return {
            "done": False,
            "task": session.card_for(task).to_dict(),
            "position": progress["judged"] + 1,
            "total": progress["total"],
        }

    @app.post("/session/{session_id}/judgments")
    def post_judgment(session_id: str, payload: dict = Body(...)):
        _check_session(session_id)
        for key in ("annotator_id", "task_id", "choice"):
            if key not in payload:
                raise HTTPException(status_code=422, detail=f"missing field {key!r}")
        try:
            judgment = store.submit(payload["annotator_id"], payload["task_id"],
                                    payload["choice"])
        except UnknownAnnotator:
            raise HTTPException(status_code=404, detail="unknown annotator")
        except UnknownTask:
            raise HTTPException(status_code=404, detail="unknown task for this annotator")
        except AlreadyJudged:
            raise HTTPException(status_code=409, detail="task already judged")
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"status": "stored", "judgment": judgment.to_dict()}

    @app.get("/session/{session_id}/export")
    def export(session_id: str):
        _check_session(session_id)
        return PlainTextResponse(store.export_jsonl(),
                                 media_type="application/x-ndjson")

    @app.get("/session/{session_id}/progress")
    def progress(session_id: str, annotator: str | None = None):
        _check_session(session_id)
        try:
            return store.progress(annotator)
        except UnknownAnnotator:
            raise HTTPException(status_code=404, detail=f"unknown annotator {annotator!r}")

    # empty string must not mount: Path("") resolves to "." yet StaticFiles
    # rejects the raw "" it is given
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
        log.info("serving UI bundle from %s", ui_dir)

    return app


def run_server(store: SessionStore, host: str = "127.0.0.1", port: int = 8000,
               ui_dir: str | Path | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(store, ui_dir), host=host, port=port)
