"""Investigation sessions: an evolving context timeline plus hypothesis records.

State lives in a single append-only JSONL event log; replaying the log
reconstructs identical sessions, which is both the persistence mechanism and
the audit trail. Hypothesis records are never mutated or deleted.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .evaluator import (
    GenerationParams,
    GenerationService,
    ModelResponse,
    TransportError,
    assess_hypothesis,
)
from .prompting import Exemplar, PromptStrategy, build_prompt, select_exemplars
from .retriever import Premise, PremiseSet, RetrievalQuery, Retriever

CONTEXT_SEPARATOR = "\n\n"


class SessionNotFound(LookupError):
    pass


class StepNotFound(LookupError):
    pass


class SessionClosed(RuntimeError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class HypothesisRecord:
    record_id: str
    hypothesis: str
    strategy_label: str
    premises: PremiseSet
    response: ModelResponse
    created_at: str

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "hypothesis": self.hypothesis,
            "strategy_label": self.strategy_label,
            "premises": [vars(p) for p in self.premises],
            "response": self.response.to_dict(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "HypothesisRecord":
        return cls(
            record_id=rec["record_id"],
            hypothesis=rec["hypothesis"],
            strategy_label=rec["strategy_label"],
            premises=PremiseSet(tuple(Premise(**p) for p in rec["premises"])),
            response=ModelResponse.from_dict(rec["response"]),
            created_at=rec["created_at"],
        )


@dataclass
class TimelineStep:
    step_id: str
    context_delta: str
    cumulative_context: str
    hypotheses: list[HypothesisRecord] = field(default_factory=list)
    created_at: str = ""

    def to_dict(self) -> dict:
        return {
            "step_id": self.step_id,
            "context_delta": self.context_delta,
            "cumulative_context": self.cumulative_context,
            "hypotheses": [h.to_dict() for h in self.hypotheses],
            "created_at": self.created_at,
        }


@dataclass
class InvestigationSession:
    session_id: str
    title: str
    created_at: str
    steps: list[TimelineStep] = field(default_factory=list)
    status: str = "open"

    def step(self, step_id: str) -> TimelineStep:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise StepNotFound(f"session {self.session_id!r} has no step {step_id!r}")

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "title": self.title,
            "created_at": self.created_at,
            "steps": [s.to_dict() for s in self.steps],
            "status": self.status,
        }


class SessionStore:
    """Append-only single-file store; load replays the event log."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.sessions: dict[str, InvestigationSession] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        self._apply(json.loads(line))

    def _append(self, event: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event, ensure_ascii=False) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "session_created":
            session = InvestigationSession(
                session_id=event["session_id"],
                title=event["title"],
                created_at=event["created_at"],
            )
            self.sessions[session.session_id] = session
        elif kind == "context_added":
            session = self.sessions[event["session_id"]]
            deltas = [s.context_delta for s in session.steps] + [event["delta"]]
            session.steps.append(
                TimelineStep(
                    step_id=event["step_id"],
                    context_delta=event["delta"],
                    cumulative_context=CONTEXT_SEPARATOR.join(deltas),
                    created_at=event["created_at"],
                )
            )
        elif kind == "hypothesis_submitted":
            session = self.sessions[event["session_id"]]
            session.step(event["step_id"]).hypotheses.append(
                HypothesisRecord.from_dict(event["record"])
            )
        elif kind == "session_closed":
            self.sessions[event["session_id"]].status = "closed"
        else:
            raise ValueError(f"unknown event kind {kind!r}")

    def _record(self, event: dict) -> None:
        self._append(event)
        self._apply(event)

    def get(self, session_id: str) -> InvestigationSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise SessionNotFound(f"no session {session_id!r}") from None

    def _get_open(self, session_id: str) -> InvestigationSession:
        session = self.get(session_id)
        if session.status != "open":
            raise SessionClosed(f"session {session_id!r} is closed")
        return session

    def list_sessions(self) -> list[InvestigationSession]:
        return list(self.sessions.values())

    def create_session(self, title: str) -> InvestigationSession:
        with self._lock:
            event = {
                "event": "session_created",
                "session_id": uuid.uuid4().hex,
                "title": title,
                "created_at": _now(),
            }
            self._record(event)
            return self.sessions[event["session_id"]]

    def add_context(self, session_id: str, delta: str) -> TimelineStep:
        if not delta or not delta.strip():
            raise ValueError("context delta must be non-empty")
        with self._lock:
            session = self._get_open(session_id)
            event = {
                "event": "context_added",
                "session_id": session_id,
                "step_id": f"step-{len(session.steps)}",
                "delta": delta,
                "created_at": _now(),
            }
            self._record(event)
            return session.steps[-1]

    def record_hypothesis(
        self, session_id: str, step_id: str, record: HypothesisRecord
    ) -> None:
        with self._lock:
            session = self._get_open(session_id)
            session.step(step_id)  # raises StepNotFound before persisting
            self._record(
                {
                    "event": "hypothesis_submitted",
                    "session_id": session_id,
                    "step_id": step_id,
                    "record": record.to_dict(),
                }
            )

    def close_session(self, session_id: str) -> InvestigationSession:
        with self._lock:
            session = self._get_open(session_id)
            self._record({"event": "session_closed", "session_id": session_id})
            return session


class SessionService:
    """Wires sessions to retrieval and assessment; per-session writes serialize."""

    def __init__(
        self,
        store: SessionStore,
        retriever: Retriever,
        generation: GenerationService,
        strategy: PromptStrategy | None = None,
        exemplar_pool: list[Exemplar] | None = None,
        exemplar_seed: int = 0,
        k: int = 5,
        params: GenerationParams | None = None,
        retry_cap: int = 2,
        locale: str = "en",
    ):
        self.store = store
        self.retriever = retriever
        self.generation = generation
        self.strategy = strategy or PromptStrategy.preset("CILR-ZS")
        self.exemplar_pool = exemplar_pool or []
        self.exemplar_seed = exemplar_seed
        self.k = k
        self.params = params or GenerationParams()
        self.retry_cap = retry_cap
        self.locale = locale
        self._session_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks.setdefault(session_id, threading.Lock())

    def create_session(self, title: str) -> InvestigationSession:
        return self.store.create_session(title)

    def add_context(self, session_id: str, delta: str) -> TimelineStep:
        with self._session_lock(session_id):
            return self.store.add_context(session_id, delta)

    def close_session(self, session_id: str) -> InvestigationSession:
        with self._session_lock(session_id):
            return self.store.close_session(session_id)

    def get_session(self, session_id: str) -> InvestigationSession:
        return self.store.get(session_id)

    def submit_hypothesis(
        self,
        session_id: str,
        step_id: str,
        hypothesis: str,
        strategy: PromptStrategy | None = None,
    ) -> HypothesisRecord:
        """Retrieve premises for the step's cumulative context, assess, persist.

        The record is stored even when the response is unparseable or the
        generation service failed; the error travels in the response.
        """
        if not hypothesis or not hypothesis.strip():
            raise ValueError("hypothesis must be non-empty")
        strategy = strategy or self.strategy
        with self._session_lock(session_id):
            session = self.store.get(session_id)
            if session.status != "open":
                raise SessionClosed(f"session {session_id!r} is closed")
            step = session.step(step_id)

            premises = self.retriever.retrieve_premises(
                RetrievalQuery(step.cumulative_context, hypothesis, k=self.k)
            )
            exemplars = select_exemplars(
                self.exemplar_pool, strategy.shots, self.exemplar_seed
            )
            bundle = build_prompt(
                strategy,
                step.cumulative_context,
                hypothesis,
                premises=premises if strategy.uses_cikr else None,
                exemplars=exemplars,
                locale=self.locale,
            )
            try:
                response = assess_hypothesis(
                    bundle, self.generation, self.params, retry_cap=self.retry_cap
                )
            except TransportError as exc:
                response = ModelResponse(
                    raw="", parse_status="unparseable", error=str(exc)
                )

            record = HypothesisRecord(
                record_id=uuid.uuid4().hex,
                hypothesis=hypothesis,
                strategy_label=strategy.label,
                premises=premises,
                response=response,
                created_at=_now(),
            )
            self.store.record_hypothesis(session_id, step_id, record)
            return record
