"""Hypothesis assessment: generation-service clients and response parsing.

A response is well-formed when its first "ASSESSMENT:" line carries a
True/False label and a "RATIONALE:" marker follows. Anything else is recorded
as unparseable with the raw text preserved; unparseable is a data state, not
an exception. Transport failures are exceptions and may be retried.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import requests

from .prompting import PromptBundle

GENERATION_TOKEN_ENV = "LAPIS_PROVIDER_KEY"

RATIONALE_TYPES = (
    "GPT4-VP-ZS",
    "GPT4-IRAC-ZS",
    "GPT4-IRAC-1S",
    "GPT4-CILR-ZS",
    "GPT4-CILR-1S",
    "GPT4-CILR-3S",
    "DEXP-ANN",
    "LIVE",
)

REF_NO_RE = re.compile(r"\b\d+do\d+\b")

_ASSESSMENT_RE = re.compile(r"^\s*[*_#>`]*\s*assessment\s*:\s*(.+)$", re.IGNORECASE)
_RATIONALE_RE = re.compile(r"rationale\s*:", re.IGNORECASE)
_FENCE_RE = re.compile(r"^\s*```[\w-]*\s*$")

DEFAULT_SYNONYMS = {"true": True, "false": False}


class TransportError(RuntimeError):
    """Generation service unreachable or failing; retryable."""


def extract_ref_nos(text: str) -> tuple[str, ...]:
    """Court-ruling reference numbers cited in text, unique, in order."""
    seen: list[str] = []
    for match in REF_NO_RE.findall(text):
        if match not in seen:
            seen.append(match)
    return tuple(seen)


@dataclass(frozen=True)
class Rationale:
    text: str
    cited_ref_nos: tuple[str, ...] = ()
    rationale_type: str = "LIVE"
    rationale_id: str | None = None
    history: tuple[str, ...] = ()

    def __post_init__(self):
        if self.rationale_type not in RATIONALE_TYPES:
            raise ValueError(f"unknown rationale_type {self.rationale_type!r}")
        for ref in self.cited_ref_nos:
            if not REF_NO_RE.fullmatch(ref):
                raise ValueError(f"{ref!r} does not match the ruling-reference pattern")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "cited_ref_nos": list(self.cited_ref_nos),
            "rationale_type": self.rationale_type,
            "rationale_id": self.rationale_id,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "Rationale":
        return cls(
            text=rec["text"],
            cited_ref_nos=tuple(rec.get("cited_ref_nos", ())),
            rationale_type=rec.get("rationale_type", "LIVE"),
            rationale_id=rec.get("rationale_id"),
            history=tuple(rec.get("history", ())),
        )


@dataclass(frozen=True)
class ModelResponse:
    raw: str
    assessment: bool | None = None
    rationale: Rationale | None = None
    parse_status: str = "unparseable"
    error: str | None = None

    def __post_init__(self):
        ok = self.assessment is not None and self.rationale is not None
        if (self.parse_status == "ok") != ok:
            raise ValueError(
                "parse_status must be 'ok' exactly when both assessment "
                "and rationale are present"
            )

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "assessment": self.assessment,
            "rationale": self.rationale.to_dict() if self.rationale else None,
            "parse_status": self.parse_status,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "ModelResponse":
        rationale = rec.get("rationale")
        return cls(
            raw=rec["raw"],
            assessment=rec.get("assessment"),
            rationale=Rationale.from_dict(rationale) if rationale else None,
            parse_status=rec.get("parse_status", "unparseable"),
            error=rec.get("error"),
        )


def _strip_fences(raw: str) -> str:
    lines = raw.splitlines()
    return "\n".join(line for line in lines if not _FENCE_RE.match(line))


def parse_response(
    raw: str, synonyms: dict[str, bool] | None = None
) -> ModelResponse:
    """Parse raw generation output into assessment and rationale.

    Never raises: malformed output comes back with parse_status
    "unparseable" and the raw text untouched.
    """
    lookup = dict(DEFAULT_SYNONYMS)
    if synonyms:
        lookup.update({k.lower(): v for k, v in synonyms.items()})

    body = _strip_fences(raw)

    assessment: bool | None = None
    for line in body.splitlines():
        m = _ASSESSMENT_RE.match(line)
        if m:
            token = m.group(1).strip().split()
            word = token[0].strip(".,;!*_`\"'") if token else ""
            assessment = lookup.get(word.lower())
            break

    rationale: Rationale | None = None
    marker = _RATIONALE_RE.search(body)
    if marker is not None:
        text = body[marker.end():].strip()
        rationale = Rationale(text=text, cited_ref_nos=extract_ref_nos(text))

    if assessment is None or rationale is None:
        return ModelResponse(raw=raw, parse_status="unparseable")
    return ModelResponse(
        raw=raw, assessment=assessment, rationale=rationale, parse_status="ok"
    )


def render_response(assessment: bool, rationale_text: str) -> str:
    """Canonical well-formed response text; inverse of parse_response."""
    label = "True" if assessment else "False"
    return f"ASSESSMENT: {label}\nRATIONALE: {rationale_text}"


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 1024

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens}


class GenerationService(Protocol):
    service_id: str

    def generate(self, prompt: str, params: GenerationParams) -> str: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ScriptedMockService:
    """Deterministic mock keyed by prompt content hash.

    Script files are line-delimited {prompt_hash, response} (or {prompt,
    response}, hashed on load). A miss raises unless a default is set.
    """

    def __init__(
        self,
        script: dict[str, str] | None = None,
        default: str | None = None,
        service_id: str = "scripted-mock",
    ):
        self.script = dict(script or {})
        self.default = default
        self.service_id = service_id
        self.call_count = 0

    def add(self, prompt: str, response: str) -> None:
        self.script[prompt_hash(prompt)] = response

    @classmethod
    def load(cls, path: str | Path, **kwargs) -> "ScriptedMockService":
        service = cls(**kwargs)
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "prompt_hash" in rec:
                    service.script[rec["prompt_hash"]] = rec["response"]
                else:
                    service.add(rec["prompt"], rec["response"])
        return service

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for h, response in sorted(self.script.items()):
                f.write(
                    json.dumps({"prompt_hash": h, "response": response}) + "\n"
                )

    def generate(self, prompt: str, params: GenerationParams) -> str:
        self.call_count += 1
        key = prompt_hash(prompt)
        if key in self.script:
            return self.script[key]
        if self.default is not None:
            return self.default
        raise LookupError(f"no scripted response for prompt hash {key[:12]}…")


class RemoteGenerationService:
    """HTTP generation client. POSTs {model, prompt, params} and expects {text}."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        timeout: float = 60.0,
        token_env: str = GENERATION_TOKEN_ENV,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.token_env = token_env
        self.service_id = f"remote-{model}"

    def generate(self, prompt: str, params: GenerationParams) -> str:
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(
                self.endpoint,
                json={
                    "model": self.model,
                    "prompt": prompt,
                    "temperature": params.temperature,
                    "max_tokens": params.max_tokens,
                },
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"generation request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"generation request returned {resp.status_code}")
        try:
            return resp.json()["text"]
        except (KeyError, ValueError) as exc:
            raise TransportError(f"malformed generation response: {exc}") from exc


def assess_hypothesis(
    bundle: PromptBundle,
    service: GenerationService,
    params: GenerationParams | None = None,
    retry_cap: int = 2,
    synonyms: dict[str, bool] | None = None,
) -> ModelResponse:
    """Submit a rendered prompt and parse the reply.

    Exactly one successful generation per call: transport failures are
    retried up to the cap, but a parsed-but-wrong answer is never re-asked.
    """
    params = params or GenerationParams()
    attempts = 0
    while True:
        try:
            raw = service.generate(bundle.rendered, params)
            break
        except TransportError:
            attempts += 1
            if attempts > retry_cap:
                raise
    return parse_response(raw, synonyms=synonyms)


def tag_rationale(response: ModelResponse, rationale_type: str) -> ModelResponse:
    """Return a copy whose rationale carries the given provenance tag."""
    if response.rationale is None:
        return response
    return replace(
        response, rationale=replace(response.rationale, rationale_type=rationale_type)
    )
