"""Application configuration with flags > environment > file precedence."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .evaluator import RemoteGenerationService, ScriptedMockService
from .index import HashingEmbeddingProvider, RemoteEmbeddingProvider

API_TOKEN_ENV = "LAPIS_API_TOKEN"
PROVIDER_KEY_ENV = "LAPIS_PROVIDER_KEY"

_SECRET_FIELDS = ("api_token",)


@dataclass
class AppConfig:
    corpus_path: str | None = None
    index_dir: str | None = None
    store_path: str | None = None
    max_tokens: int = 512
    provider: str = "hashing"
    provider_endpoint: str | None = None
    provider_model: str | None = None
    provider_dim: int = 64
    service: str = "mock"
    service_endpoint: str | None = None
    service_model: str | None = None
    mock_script: str | None = None
    mock_default: str | None = None
    locale: str = "en"
    k: int = 5
    temperature: float = 0.0
    gen_max_tokens: int = 1024
    retry_cap: int = 2
    timeout: float = 60.0
    port: int = 8080
    api_token: str | None = None

    def validate(self) -> None:
        if self.provider not in ("hashing", "remote"):
            raise ValueError(f"unknown provider {self.provider!r}")
        if self.service not in ("mock", "remote"):
            raise ValueError(f"unknown service {self.service!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_tokens < 32:
            raise ValueError("max_tokens must be >= 32")
        if self.provider_dim < 1:
            raise ValueError("provider_dim must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.port < 65536:
            raise ValueError("port must be in 1..65535")
        if self.provider == "remote" and not self.provider_endpoint:
            raise ValueError("remote provider requires provider_endpoint")
        if self.service == "remote" and not self.service_endpoint:
            raise ValueError("remote service requires service_endpoint")

    def as_safe_dict(self) -> dict:
        """Config echo with secrets masked; safe for logs and reports."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in _SECRET_FIELDS and value:
                value = "***"
            out[f.name] = value
        return out


_ENV_PREFIX = "LAPIS_"

# config keys settable via LAPIS_<NAME> environment variables
_ENV_KEYS = {
    "corpus_path": "CORPUS",
    "index_dir": "INDEX_DIR",
    "store_path": "STORE",
    "max_tokens": "MAX_TOKENS",
    "provider": "PROVIDER",
    "provider_endpoint": "PROVIDER_ENDPOINT",
    "provider_model": "PROVIDER_MODEL",
    "provider_dim": "PROVIDER_DIM",
    "service": "SERVICE",
    "service_endpoint": "SERVICE_ENDPOINT",
    "service_model": "SERVICE_MODEL",
    "mock_script": "MOCK_SCRIPT",
    "mock_default": "MOCK_DEFAULT",
    "locale": "LOCALE",
    "k": "K",
    "temperature": "TEMPERATURE",
    "gen_max_tokens": "GEN_MAX_TOKENS",
    "retry_cap": "RETRY_CAP",
    "timeout": "TIMEOUT",
    "port": "PORT",
    "api_token": "API_TOKEN",
}

_FIELD_TYPES = {f.name: f.type for f in fields(AppConfig)}


def _coerce(name: str, value: Any) -> Any:
    if value is None or not isinstance(value, str):
        return value
    ftype = _FIELD_TYPES.get(name, "str")
    if "int" in str(ftype):
        return int(value)
    if "float" in str(ftype):
        return float(value)
    return value


def load_app_config(
    config_file: str | Path | None = None,
    env: Mapping[str, str] = os.environ,
    overrides: Mapping[str, Any] | None = None,
) -> AppConfig:
    """Merge defaults, file, environment and flag overrides, then validate."""
    merged: dict[str, Any] = {}

    if config_file is not None:
        raw = json.loads(Path(config_file).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"config file {config_file} must hold an object")
        unknown = set(raw) - set(_ENV_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(raw)

    for name, suffix in _ENV_KEYS.items():
        value = env.get(_ENV_PREFIX + suffix)
        if value is not None:
            merged[name] = value

    if overrides:
        for name, value in overrides.items():
            if value is not None:
                merged[name] = value

    config = AppConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    config.validate()
    return config


def build_provider(config: AppConfig):
    if config.provider == "hashing":
        return HashingEmbeddingProvider(dim=config.provider_dim)
    return RemoteEmbeddingProvider(
        endpoint=config.provider_endpoint,
        model=config.provider_model or "default",
        dim=config.provider_dim,
        timeout=config.timeout,
    )


def provider_for_index(provider_id: str, config: AppConfig):
    """Reconstruct the provider an index was built with."""
    if provider_id.startswith("hashing-"):
        return HashingEmbeddingProvider(dim=int(provider_id.split("-", 1)[1]))
    provider = build_provider(config)
    if provider.provider_id != provider_id:
        raise ValueError(
            f"index was built with provider {provider_id!r}, "
            f"configured provider is {provider.provider_id!r}"
        )
    return provider


def build_generation_service(config: AppConfig):
    if config.service == "mock":
        if config.mock_script:
            return ScriptedMockService.load(
                config.mock_script, default=config.mock_default
            )
        return ScriptedMockService(default=config.mock_default)
    return RemoteGenerationService(
        endpoint=config.service_endpoint,
        model=config.service_model or "default",
        timeout=config.timeout,
    )
