"""Request/response types shared by every chat backend.

Two fixed generation profiles are exposed: a deterministic one for graph
extraction and a stochastic one for the detection prompts. Callers select a
profile by role instead of passing raw numbers, so the values cannot drift
between call sites.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..core import HallucheckError

ROLES = ("system", "user", "assistant")


class ProviderError(HallucheckError):
    """Base class for chat-backend failures."""


class TransportError(ProviderError):
    """Network or HTTP failure, surfaced after the retry budget is spent."""


class ProviderRefusal(ProviderError):
    """The backend answered but returned no usable content."""


class ConfigError(ProviderError):
    """Bad request shape, unknown model, or missing credentials."""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float
    top_p: float
    max_tokens: int
    frequency_penalty: float
    presence_penalty: float

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ConfigError("max_tokens must be positive")

    def as_dict(self) -> dict[str, float | int]:
        return {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "frequency_penalty": self.frequency_penalty,
            "presence_penalty": self.presence_penalty,
        }


# Graph extraction wants reproducible, repetition-averse output.
KG_PROFILE = GenerationParams(
    temperature=0.0,
    top_p=1.0,
    max_tokens=8096,
    frequency_penalty=1.0,
    presence_penalty=1.0,
)

# Detection prompts and sample generation run with free sampling.
DETECT_PROFILE = GenerationParams(
    temperature=1.0,
    top_p=1.0,
    max_tokens=8096,
    frequency_penalty=0.0,
    presence_penalty=0.0,
)


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ConfigError(f"unknown message role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call: model, ordered messages, sampling params."""

    model_id: str
    messages: tuple[Message, ...]
    params: GenerationParams

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ConfigError("model_id is empty")
        if not self.messages:
            raise ConfigError("request has no messages")
        if self.messages[-1].role != "user":
            raise ConfigError("last message must have role 'user'")

    @classmethod
    def user(cls, model_id: str, content: str, params: GenerationParams) -> "ChatRequest":
        return cls(model_id=model_id, messages=(Message("user", content),), params=params)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    cached: bool = False
    provider_meta: Mapping[str, Any] = field(default_factory=dict)


def canonical_request(request: ChatRequest, backend: str, nonce: str = "") -> str:
    """Canonical JSON form of a request, used for digests and cache records."""
    payload = {
        "backend": backend,
        "model_id": request.model_id,
        "params": request.params.as_dict(),
        "messages": [[m.role, m.content] for m in request.messages],
    }
    if nonce:
        payload["nonce"] = nonce
    return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def cache_key(request: ChatRequest, backend: str, nonce: str = "") -> str:
    """SHA-256 digest over the canonical request form.

    Equal requests give equal digests; changing any field (backend, model,
    params, messages, nonce) changes the digest.
    """
    canon = canonical_request(request, backend, nonce)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
