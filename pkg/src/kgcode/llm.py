"""Completion backends: OpenAI-compatible HTTP, canned fixtures, and a record/replay cache."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx

from .codeparse import default_stop_sequences

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


class FinishReason(str, enum.Enum):
    STOP = "STOP"
    LENGTH = "LENGTH"
    ERROR = "ERROR"


class BackendKind(str, enum.Enum):
    HTTP = "HTTP"
    FIXTURE = "FIXTURE"
    REPLAY = "REPLAY"


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.5
    max_tokens: int = 256
    stop: tuple[str, ...] = default_stop_sequences()
    seed: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")
        if len(self.stop) > 4:
            raise ValueError(f"at most 4 stop sequences are allowed, got {len(self.stop)}")
        if any(not s for s in self.stop):
            raise ValueError("stop sequences must be non-empty")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], with_rationale: bool = False) -> GenerationParams:
        stop = data.get("stop")
        return cls(
            temperature=float(data.get("temperature", 0.5)),
            max_tokens=int(data.get("max_tokens", 256)),
            stop=tuple(stop) if stop is not None else default_stop_sequences(with_rationale),
            seed=data.get("seed"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens, "stop": list(self.stop), "seed": self.seed}


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    params: GenerationParams = GenerationParams()
    tag: str = ""

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    finish_reason: FinishReason
    latency_ms: int = 0
    backend_id: str = ""
    error: str | None = None

    @classmethod
    def failure(cls, message: str, backend_id: str, latency_ms: int = 0) -> CompletionResponse:
        return cls("", FinishReason.ERROR, latency_ms, backend_id, message)

    @property
    def ok(self) -> bool:
        return self.finish_reason is not FinishReason.ERROR


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind = BackendKind.FIXTURE
    base_url: str | None = None
    model_name: str | None = None
    api_key_env: str | None = None
    fixture_path: str | None = None
    fixture_default: str | None = None
    cache_path: str | None = None
    record: bool = False
    inner: BackendConfig | None = None
    max_concurrency: int = 4
    max_retries: int = 3
    backoff_base_ms: int = 500
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.max_retries < 0 or self.backoff_base_ms < 0:
            raise ValueError("max_retries and backoff_base_ms must be >= 0")
        if self.kind is BackendKind.HTTP and not (self.base_url and self.model_name):
            raise ValueError("HTTP backend needs base_url and model_name")
        if self.kind is BackendKind.FIXTURE and not self.fixture_path:
            raise ValueError("FIXTURE backend needs fixture_path")
        if self.kind is BackendKind.REPLAY and not self.cache_path:
            raise ValueError("REPLAY backend needs cache_path")
        if self.record and self.inner is None:
            raise ValueError("record mode needs an inner backend to delegate misses to")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> BackendConfig:
        def path(key: str) -> str | None:
            v = data.get(key)
            if v is None or base_dir is None:
                return v
            return str((base_dir / v).resolve()) if not Path(v).is_absolute() else v

        inner = data.get("inner")
        return cls(
            kind=BackendKind(str(data.get("kind", "FIXTURE")).upper()),
            base_url=data.get("base_url"),
            model_name=data.get("model_name"),
            api_key_env=data.get("api_key_env"),
            fixture_path=path("fixture_path"),
            fixture_default=data.get("fixture_default"),
            cache_path=path("cache_path"),
            record=bool(data.get("record", False)),
            inner=cls.from_dict(inner, base_dir) if inner else None,
            max_concurrency=int(data.get("max_concurrency", 4)),
            max_retries=int(data.get("max_retries", 3)),
            backoff_base_ms=int(data.get("backoff_base_ms", 500)),
            timeout_s=float(data.get("timeout_s", 60.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": self.kind.value,
            "base_url": self.base_url,
            "model_name": self.model_name,
            "api_key_env": self.api_key_env,
            "fixture_path": self.fixture_path,
            "fixture_default": self.fixture_default,
            "cache_path": self.cache_path,
            "record": self.record,
            "inner": self.inner.to_dict() if self.inner else None,
            "max_concurrency": self.max_concurrency,
            "max_retries": self.max_retries,
            "backoff_base_ms": self.backoff_base_ms,
            "timeout_s": self.timeout_s,
        }
        return {k: v for k, v in out.items() if v is not None}


class Backend(Protocol):
    backend_id: str

    def complete(self, req: CompletionRequest) -> CompletionResponse: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8", "surrogatepass")).hexdigest()


def cache_key(prompt: str, params: GenerationParams) -> str:
    payload = json.dumps({"prompt": prompt, "params": params.to_dict()}, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(payload.encode("ascii")).hexdigest()


def _elapsed_ms(t0: float) -> int:
    return int((time.monotonic() - t0) * 1000)


class FixtureBackend:
    """Serve canned completions keyed by request tag or by prompt hash."""

    def __init__(self, mapping: Mapping[str, str], default: str | None = None, backend_id: str = "fixture"):
        self.mapping = dict(mapping)
        self.default = default
        self.backend_id = backend_id

    @classmethod
    def from_file(cls, path: str | Path, default: str | None = None) -> FixtureBackend:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
            raise ValueError(f"{path}: fixture file must be a JSON object of strings")
        return cls(data, default, f"fixture:{Path(path).name}")

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        t0 = time.monotonic()
        text = self.mapping.get(req.tag) if req.tag else None
        if text is None:
            text = self.mapping.get(prompt_hash(req.prompt))
        if text is None:
            text = self.default
        if text is None:
            return CompletionResponse.failure(f"no fixture for tag {req.tag!r}", self.backend_id, _elapsed_ms(t0))
        return CompletionResponse(text, FinishReason.STOP, _elapsed_ms(t0), self.backend_id)


class HttpBackend:
    """POST ``{base_url}/completions`` with retries and full-jitter exponential backoff."""

    def __init__(
        self,
        cfg: BackendConfig,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.cfg = cfg
        self.backend_id = f"http:{cfg.model_name}"
        self._client = client or httpx.Client(timeout=cfg.timeout_s)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._rng_lock = threading.Lock()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _backoff(self, attempt: int) -> float:
        cap = self.cfg.backoff_base_ms * (2**attempt) / 1000.0
        with self._rng_lock:
            return self._rng.uniform(0.0, cap)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        url = self.cfg.base_url.rstrip("/") + "/completions"  # type: ignore[union-attr]
        body: dict[str, Any] = {
            "model": self.cfg.model_name,
            "prompt": req.prompt,
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
            "stop": list(req.params.stop),
        }
        if req.params.seed is not None:
            body["seed"] = req.params.seed
        t0 = time.monotonic()
        last_error = "no attempt made"
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleep(self._backoff(attempt - 1))
            try:
                resp = self._client.post(url, json=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = f"transport error: {type(exc).__name__}"
                logger.warning("%s attempt %d failed: %s", req.tag or "request", attempt + 1, last_error)
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("%s attempt %d got %s", req.tag or "request", attempt + 1, last_error)
                continue
            if resp.status_code >= 400:
                return CompletionResponse.failure(f"HTTP {resp.status_code}", self.backend_id, _elapsed_ms(t0))
            try:
                choice = resp.json()["choices"][0]
                text = choice["text"]
            except (ValueError, KeyError, IndexError, TypeError):
                return CompletionResponse.failure("malformed completion payload", self.backend_id, _elapsed_ms(t0))
            reason = FinishReason.LENGTH if choice.get("finish_reason") == "length" else FinishReason.STOP
            return CompletionResponse(text or "", reason, _elapsed_ms(t0), self.backend_id)
        return CompletionResponse.failure(
            f"gave up after {self.cfg.max_retries + 1} attempts: {last_error}", self.backend_id, _elapsed_ms(t0)
        )


class ReplayBackend:
    """Serve cached completions; in record mode, fill misses from ``inner`` and persist them.

    The cache file is line-delimited JSON ``{key, params, text, finish_reason}``.
    Reads are lock-free dict lookups; appends are serialized.
    """

    def __init__(self, cache_path: str | Path, inner: Backend | None = None, record: bool = False):
        self.cache_path = Path(cache_path)
        self.inner = inner
        self.record = record
        self.backend_id = f"replay:{self.cache_path.name}"
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[str, FinishReason]] = {}
        if self.cache_path.exists():
            with self.cache_path.open(encoding="utf-8") as f:
                for line in f:
                    if not line.strip():
                        continue
                    try:
                        row = json.loads(line)
                        self._entries[row["key"]] = (row["text"], FinishReason(row["finish_reason"]))
                    except (ValueError, KeyError, TypeError):
                        logger.warning("skipping unreadable cache line in %s", self.cache_path)

    def __len__(self) -> int:
        return len(self._entries)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        key = cache_key(req.prompt, req.params)
        hit = self._entries.get(key)
        if hit is not None:
            return CompletionResponse(hit[0], hit[1], 0, self.backend_id)
        if not self.record or self.inner is None:
            return CompletionResponse.failure(f"cache miss for {req.tag or key[:12]}", self.backend_id)
        resp = self.inner.complete(req)
        if resp.ok:
            row = {"key": key, "params": req.params.to_dict(), "text": resp.text, "finish_reason": resp.finish_reason.value}
            with self._lock:
                if key not in self._entries:
                    self.cache_path.parent.mkdir(parents=True, exist_ok=True)
                    with self.cache_path.open("a", encoding="utf-8") as f:
                        f.write(json.dumps(row, ensure_ascii=False) + "\n")
                    self._entries[key] = (resp.text, resp.finish_reason)
        return resp


def make_backend(cfg: BackendConfig) -> Backend:
    if cfg.kind is BackendKind.HTTP:
        return HttpBackend(cfg)
    if cfg.kind is BackendKind.FIXTURE:
        return FixtureBackend.from_file(cfg.fixture_path, cfg.fixture_default)  # type: ignore[arg-type]
    inner = make_backend(cfg.inner) if cfg.inner is not None else None
    return ReplayBackend(cfg.cache_path, inner, cfg.record)  # type: ignore[arg-type]


def _safe_complete(backend: Backend, req: CompletionRequest) -> CompletionResponse:
    try:
        return backend.complete(req)
    except Exception as exc:  # one bad request must not sink the batch
        logger.exception("backend raised for %s", req.tag or "request")
        return CompletionResponse.failure(f"{type(exc).__name__}: {exc}", getattr(backend, "backend_id", "?"))


def complete(req: CompletionRequest, backend: Backend | BackendConfig) -> CompletionResponse:
    if isinstance(backend, BackendConfig):
        backend = make_backend(backend)
    return _safe_complete(backend, req)


def complete_batch(
    reqs: Sequence[CompletionRequest],
    backend: Backend | BackendConfig,
    max_concurrency: int | None = None,
) -> list[CompletionResponse]:
    """Run requests with at most ``max_concurrency`` in flight; results keep input order."""
    if not reqs:
        return []
    if isinstance(backend, BackendConfig):
        limit = max_concurrency or backend.max_concurrency
        backend = make_backend(backend)
    else:
        limit = max_concurrency or 1
    with ThreadPoolExecutor(max_workers=limit) as pool:
        return list(pool.map(lambda r: _safe_complete(backend, r), reqs))
