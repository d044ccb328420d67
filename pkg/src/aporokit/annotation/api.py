"""HTTP surface over the annotation store.

Serves items for labeling, accepts label and adjudication posts, and exposes
agreement stats, the disagreement queue, the dataset export, and the
guidelines text for annotator display. The browser client under frontend/
is mounted at /ui when its build output exists.
"""

from __future__ import annotations

import io
from importlib import resources
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import HTMLResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .store import (
    AnnotationError,
    AnnotationStore,
    AuthorizationError,
    ConflictError,
    LabelValue,
)


class LabelRequest(BaseModel):
    annotator: str
    label: str | None = None
    insufficient_context: bool = False
    round: int = 1
    submission_id: str | None = None


class AdjudicateRequest(BaseModel):
    final_label: str | None = None
    remove: bool = False
    note: str = ""


def load_guidelines(path: str | Path | None = None) -> str:
    if path is None:
        return resources.files("aporokit").joinpath("data/guidelines.md").read_text("utf-8")
    return Path(path).read_text("utf-8")


def _http_error(exc: AnnotationError) -> HTTPException:
    if isinstance(exc, AuthorizationError):
        return HTTPException(status_code=403, detail=str(exc))
    if isinstance(exc, ConflictError):
        return HTTPException(status_code=409, detail=str(exc))
    return HTTPException(status_code=400, detail=str(exc))


def create_app(
    store: AnnotationStore,
    guidelines_path: str | Path | None = None,
    frontend_dist: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="annotation service")
    guidelines = load_guidelines(guidelines_path)

    @app.get("/items/next")
    def next_item(annotator: str = Query(...), round: int = 1):
        pending = store.pending_items(annotator, round)
        assigned = [
            item
            for (item, rnd), annotators in store.assignments.items()
            if rnd == round and annotator in annotators
        ]
        done = len(assigned) - len(pending)
        if not pending:
            return {"item": None, "progress": {"done": done, "total": len(assigned)}}
        item_id = pending[0]
        payload = dict(store.items[item_id])
        return {
            "item": payload,
            "progress": {"done": done, "total": len(assigned)},
            "remaining": len(pending),
        }

    @app.post("/items/{item_id}/label")
    def post_label(item_id: str, req: LabelRequest):
        try:
            record = store.record_label(
                item_id,
                req.annotator,
                label=req.label,
                insufficient_context=req.insufficient_context,
                round=req.round,
                submission_id=req.submission_id,
            )
        except AnnotationError as exc:
            raise _http_error(exc)
        return {
            "item_id": record.item_id,
            "annotator_id": record.annotator_id,
            "label": record.label.value if record.label else None,
            "insufficient_context": record.insufficient_context,
            "round": record.round,
            "submission_id": record.submission_id,
        }

    @app.get("/agreement")
    def agreement(round: int = 1):
        try:
            return store.pairwise_agreement(round)
        except AnnotationError as exc:
            raise _http_error(exc)

    @app.get("/queue")
    def queue(round: int = 1):
        entries = []
        for item_id in store.disagreement_queue(round):
            if item_id in store.adjudications:
                continue
            records = [
                {
                    "annotator_id": r.annotator_id,
                    "label": r.label.value if r.label else None,
                    "insufficient_context": r.insufficient_context,
                }
                for r in store.item_records(item_id, round)
            ]
            entries.append({"item": store.items[item_id], "records": records})
        return {"queue": entries}

    @app.post("/items/{item_id}/adjudicate")
    def adjudicate(item_id: str, req: AdjudicateRequest):
        try:
            decision = store.adjudicate(
                item_id, final_label=req.final_label, remove=req.remove, note=req.note
            )
        except AnnotationError as exc:
            raise _http_error(exc)
        return {
            "item_id": decision.item_id,
            "final_label": decision.final_label.value if decision.final_label else None,
            "removed": decision.removed,
            "note": decision.resolution_note,
        }

    @app.get("/export")
    def export():
        try:
            rows = store.export_rows()
        except AnnotationError as exc:
            raise _http_error(exc)
        buffer = io.StringIO()
        import csv as _csv

        writer = _csv.DictWriter(buffer, fieldnames=["id", "text", "region", "topic_id", "month", "label"])
        writer.writeheader()
        writer.writerows(rows)
        counts = {label.value: 0 for label in LabelValue}
        for row in rows:
            counts[row["label"]] += 1
        return PlainTextResponse(buffer.getvalue(), media_type="text/csv", headers={"X-Class-Counts": str(counts)})

    @app.get("/guidelines")
    def get_guidelines():
        return PlainTextResponse(guidelines, media_type="text/markdown")

    @app.get("/", response_class=HTMLResponse)
    def root():
        return '<html><body><p>annotation service is running; UI at <a href="/ui/">/ui/</a></p></body></html>'

    if frontend_dist is not None and Path(frontend_dist).is_dir():
        app.mount("/ui", StaticFiles(directory=str(frontend_dist), html=True), name="ui")

    return app
