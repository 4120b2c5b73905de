"""HTTP API over the session service.

Errors are machine-readable {code, message} bodies. When an API token is
configured, every endpoint except /health requires it in the X-API-Token
header.
"""

from __future__ import annotations

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .knowledgebase import KnowledgeBase
from .prompting import PromptStrategy
from .session import SessionClosed, SessionNotFound, SessionService, StepNotFound


class CreateSessionRequest(BaseModel):
    title: str


class AddContextRequest(BaseModel):
    delta: str


class SubmitHypothesisRequest(BaseModel):
    hypothesis: str
    strategy: str | None = None


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def create_app(
    service: SessionService,
    kb: KnowledgeBase | None = None,
    api_token: str | None = None,
) -> FastAPI:
    app = FastAPI(title="lapis", docs_url=None, redoc_url=None)

    def require_token(x_api_token: str | None = Header(default=None)) -> None:
        if api_token is not None and x_api_token != api_token:
            raise _error(401, "unauthorized", "missing or invalid API token")

    guarded = [Depends(require_token)]

    @app.exception_handler(SessionNotFound)
    async def _session_not_found(request, exc):
        return JSONResponse(
            status_code=404, content={"code": "not_found", "message": str(exc)}
        )

    @app.exception_handler(StepNotFound)
    async def _step_not_found(request, exc):
        return JSONResponse(
            status_code=404, content={"code": "not_found", "message": str(exc)}
        )

    @app.exception_handler(SessionClosed)
    async def _session_closed(request, exc):
        return JSONResponse(
            status_code=409, content={"code": "session_closed", "message": str(exc)}
        )

    @app.exception_handler(ValueError)
    async def _invalid(request, exc):
        return JSONResponse(
            status_code=422, content={"code": "invalid_request", "message": str(exc)}
        )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/sessions", dependencies=guarded, status_code=201)
    def create_session(body: CreateSessionRequest):
        return service.create_session(body.title).to_dict()

    @app.get("/sessions", dependencies=guarded)
    def list_sessions():
        return [
            {
                "session_id": s.session_id,
                "title": s.title,
                "created_at": s.created_at,
                "status": s.status,
                "step_count": len(s.steps),
            }
            for s in service.store.list_sessions()
        ]

    @app.get("/sessions/{session_id}", dependencies=guarded)
    def get_session(session_id: str):
        return service.get_session(session_id).to_dict()

    @app.post("/sessions/{session_id}/context", dependencies=guarded, status_code=201)
    def add_context(session_id: str, body: AddContextRequest):
        return service.add_context(session_id, body.delta).to_dict()

    @app.post(
        "/sessions/{session_id}/steps/{step_id}/hypotheses",
        dependencies=guarded,
        status_code=201,
    )
    def submit_hypothesis(session_id: str, step_id: str, body: SubmitHypothesisRequest):
        strategy = (
            PromptStrategy.preset(body.strategy) if body.strategy is not None else None
        )
        record = service.submit_hypothesis(
            session_id, step_id, body.hypothesis, strategy=strategy
        )
        return record.to_dict()

    @app.get("/paragraphs/{paragraph_id}", dependencies=guarded)
    def get_paragraph(paragraph_id: str):
        if kb is None:
            raise _error(404, "not_found", "no knowledgebase attached")
        try:
            paragraph = kb.paragraph(paragraph_id)
        except KeyError:
            raise _error(404, "not_found", f"no paragraph {paragraph_id!r}") from None
        doc = kb.document(paragraph.doc_id)
        return {
            "id": paragraph.id,
            "text": paragraph.text,
            "source_kind": doc.source_kind,
            "ref_no": doc.ref_no,
            "title": doc.title,
        }

    return app
