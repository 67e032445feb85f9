"""Client tying a chat backend to caching, retries, and rate limiting.

``complete`` serves identical requests from the on-disk cache when one is
configured. ``sample_n`` deliberately skips the cache-read path (each of the n
draws must be an independent call) but still records every response under an
index-distinguished digest, so a batch of samples remains auditable.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

from .cache import ResponseCache
from .types import (
    ChatRequest,
    ChatResponse,
    ConfigError,
    ProviderRefusal,
    TransportError,
    cache_key,
    canonical_request,
)

logger = logging.getLogger(__name__)


class ChatBackend(Protocol):
    name: str

    def complete_once(self, request: ChatRequest) -> str: ...


class SampleBatchError(TransportError):
    """A sample batch failed part way; ``succeeded`` counts completed draws."""

    def __init__(self, message: str, succeeded: int):
        super().__init__(message)
        self.succeeded = succeeded


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_start_s: float = 1.0
    backoff_factor: float = 2.0


class RateLimiter:
    """Global minimum spacing between requests, expressed as requests/minute."""

    def __init__(
        self,
        requests_per_minute: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if requests_per_minute <= 0:
            raise ConfigError("requests_per_minute must be positive")
        self.interval = 60.0 / requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def wait(self) -> None:
        with self._lock:
            now = self._clock()
            delay = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self.interval
        if delay > 0:
            self._sleep(delay)


class ChatClient:
    def __init__(
        self,
        backend: ChatBackend,
        cache: ResponseCache | None = None,
        retry: RetryPolicy = RetryPolicy(),
        rate_limiter: RateLimiter | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.cache = cache
        self.retry = retry
        self.rate_limiter = rate_limiter
        self._sleep = sleep

    @property
    def backend_name(self) -> str:
        return self.backend.name

    def _call_with_retry(self, request: ChatRequest) -> str:
        delay = self.retry.backoff_start_s
        last: TransportError | None = None
        for attempt in range(1, self.retry.attempts + 1):
            if self.rate_limiter is not None:
                self.rate_limiter.wait()
            try:
                content = self.backend.complete_once(request)
            except TransportError as exc:
                last = exc
                if attempt < self.retry.attempts:
                    logger.warning("transport failure (attempt %d/%d): %s", attempt, self.retry.attempts, exc)
                    self._sleep(delay)
                    delay *= self.retry.backoff_factor
                continue
            if not content:
                raise ProviderRefusal("backend returned empty content")
            return content
        assert last is not None
        raise last

    def complete(self, request: ChatRequest) -> ChatResponse:
        """Complete one request, serving repeats from the cache when enabled."""
        digest = cache_key(request, self.backend_name)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                return ChatResponse(content=hit, cached=True)
        content = self._call_with_retry(request)
        if self.cache is not None:
            self.cache.put(digest, canonical_request(request, self.backend_name), content)
        return ChatResponse(content=content, cached=False)

    def sample_n(self, request: ChatRequest, n: int) -> list[ChatResponse]:
        """Draw n independent completions for the same request.

        Fails as a whole on the first error, reporting how many draws had
        already succeeded. Temperature 0 gets an advisory warning only: the
        draws would not be diverse.
        """
        if n < 1:
            raise ConfigError(f"sample count must be >= 1, got {n}")
        if request.params.temperature == 0:
            logger.warning("sampling %d completions at temperature 0; draws will not vary", n)
        responses: list[ChatResponse] = []
        for i in range(n):
            try:
                content = self._call_with_retry(request)
            except (TransportError, ProviderRefusal) as exc:
                raise SampleBatchError(
                    f"sample batch failed on draw {i + 1} of {n} "
                    f"({len(responses)} succeeded): {exc}",
                    succeeded=len(responses),
                ) from exc
            if self.cache is not None:
                nonce = f"sample:{i}"
                digest = cache_key(request, self.backend_name, nonce=nonce)
                self.cache.put(digest, canonical_request(request, self.backend_name, nonce=nonce), content)
            responses.append(ChatResponse(content=content, cached=False))
        return responses
