"""Chat-completion HTTP gateway with caching, retry, and a mock transport.

Requests follow the OpenAI-style chat-completions JSON convention; provider
quirks live behind the small transport seam so experiments and tests can
swap in scripted mocks. Completions are cached on disk keyed by a digest of
(model, prompt bytes, temperature, max_output_tokens): a warm cache replays
an experiment with zero network traffic. Retryable failures (HTTP 429/5xx,
timeouts, connection drops) back off exponentially with jitter; the delay
sequence is nondecreasing across attempts.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .errors import (AuthError, CompletionTimeout, GatewayError,
                     MalformedResponse, RetryExhausted)

_BACKOFF_BASE = 0.5
_BACKOFF_JITTER = 0.1  # fraction of the base delay


@dataclass
class EndpointConfig:
    """Connection and decoding settings for one chat-completion endpoint.

    The API key is looked up in the environment under api_key_env; secrets
    never live in config values. Experiment runs keep temperature at 0.0;
    overriding requires allow_nonzero_temperature.
    """

    base_url: str
    model_name: str
    api_key_env: str
    temperature: float = 0.0
    max_output_tokens: int = 512
    request_timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4
    requests_per_second: float | None = None
    allow_nonzero_temperature: bool = False

    def __post_init__(self) -> None:
        if self.temperature != 0.0 and not self.allow_nonzero_temperature:
            raise GatewayError(
                "temperature must be 0.0 for experiment runs; set "
                "allow_nonzero_temperature to override deliberately"
            )
        if self.max_retries < 0 or self.max_concurrency < 1:
            raise GatewayError("max_retries must be >= 0 and max_concurrency >= 1")
        if self.request_timeout <= 0:
            raise GatewayError("request_timeout must be positive")


@dataclass(frozen=True)
class CompletionRecord:
    cache_key: str
    prompt: str
    response_text: str
    latency: float
    model_name: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    timestamp: float = 0.0


@dataclass(frozen=True)
class TransportResponse:
    status: int
    body: dict | None = None
    text: str = ""


class Transport(Protocol):
    def send(self, url: str, headers: dict, payload: dict,
             timeout: float) -> TransportResponse: ...


class HttpTransport:
    """Real HTTP POST transport over requests."""

    def send(self, url: str, headers: dict, payload: dict,
             timeout: float) -> TransportResponse:
        try:
            resp = requests.post(url, headers=headers, json=payload,
                                 timeout=timeout)
        except requests.Timeout as exc:
            raise TimeoutError(str(exc)) from exc
        except requests.RequestException as exc:
            raise ConnectionError(str(exc)) from exc
        try:
            body = resp.json()
        except ValueError:
            body = None
        return TransportResponse(status=resp.status_code, body=body,
                                 text=resp.text)


class MockTransport:
    """Scripted transport for tests.

    ``responder`` maps the outgoing payload to a TransportResponse, a plain
    string (wrapped as a 200 chat response), or an exception instance to
    raise. Alternatively pass ``script``, a list consumed one response per
    call. Tracks call counts and peak concurrent in-flight sends.
    """

    def __init__(
        self,
        responder: Callable[[dict], object] | None = None,
        script: Sequence[object] | None = None,
        delay: float = 0.0,
    ):
        if (responder is None) == (script is None):
            raise ValueError("provide exactly one of responder or script")
        self._responder = responder
        self._script = list(script) if script is not None else None
        self._delay = delay
        self._lock = threading.Lock()
        self.calls = 0
        self.payloads: list[dict] = []
        self._in_flight = 0
        self.peak_in_flight = 0

    def send(self, url: str, headers: dict, payload: dict,
             timeout: float) -> TransportResponse:
        with self._lock:
            self.calls += 1
            self.payloads.append(payload)
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
        try:
            if self._script is not None:
                with self._lock:
                    if not self._script:
                        raise AssertionError("mock script exhausted")
                    item = self._script.pop(0)
            else:
                item = self._responder(payload)  # type: ignore[misc]
            if self._delay:
                time.sleep(self._delay)
            if isinstance(item, Exception):
                raise item
            if isinstance(item, str):
                return TransportResponse(status=200, body=chat_body(item))
            return item  # type: ignore[return-value]
        finally:
            with self._lock:
                self._in_flight -= 1


def chat_body(text: str, prompt_tokens: int | None = None,
              completion_tokens: int | None = None) -> dict:
    """A minimal chat-completions response body carrying one message."""
    body: dict = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if prompt_tokens is not None or completion_tokens is not None:
        body["usage"] = {"prompt_tokens": prompt_tokens,
                         "completion_tokens": completion_tokens}
    return body


def cache_key(model_name: str, prompt_text: str, temperature: float,
              max_output_tokens: int) -> str:
    raw = "\x00".join(
        (model_name, repr(temperature), str(max_output_tokens))
    ).encode("utf-8") + b"\x00" + prompt_text.encode("utf-8")
    return hashlib.sha256(raw).hexdigest()


class CompletionCache:
    """Disk cache of CompletionRecords under <root>/<first 2 hex>/<key>.json."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> CompletionRecord | None:
        path = self._path(key)
        if not path.is_file():
            return None
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise GatewayError(f"corrupt cache entry {path}: {exc}") from exc
        return CompletionRecord(**obj)

    def put(self, record: CompletionRecord) -> None:
        path = self._path(record.cache_key)
        path.parent.mkdir(parents=True, exist_ok=True)
        obj = {
            "cache_key": record.cache_key,
            "prompt": record.prompt,
            "response_text": record.response_text,
            "latency": record.latency,
            "model_name": record.model_name,
            "prompt_tokens": record.prompt_tokens,
            "completion_tokens": record.completion_tokens,
            "timestamp": record.timestamp,
        }
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(obj, fh, ensure_ascii=False)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)


class TokenBucket:
    """Thread-safe token bucket; acquire() blocks until a token is free."""

    def __init__(self, rate: float, capacity: float | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate <= 0:
            raise GatewayError("rate must be positive")
        self._rate = rate
        self._capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self._capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity,
                                   self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


def _prompt_text(prompt: object) -> str:
    text = getattr(prompt, "full_text", prompt)
    if not isinstance(text, str) or not text:
        raise GatewayError("prompt must be a non-empty string or RenderedPrompt")
    return text


def _build_request(cfg: EndpointConfig, prompt_text: str) -> tuple[str, dict, dict]:
    key = os.environ.get(cfg.api_key_env)
    if not key:
        raise AuthError(
            f"environment variable {cfg.api_key_env!r} is unset; export the "
            f"API key there (secrets never live in config files)"
        )
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    headers = {"Authorization": f"Bearer {key}",
               "Content-Type": "application/json"}
    payload = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt_text}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }
    return url, headers, payload


def _extract_text(response: TransportResponse) -> tuple[str, int | None, int | None]:
    body = response.body
    try:
        text = body["choices"][0]["message"]["content"]
        if not isinstance(text, str):
            raise TypeError
    except (TypeError, KeyError, IndexError):
        raise MalformedResponse(
            f"response body lacks choices[0].message.content: {response.text[:200]!r}"
        ) from None
    usage = body.get("usage") or {}
    return text, usage.get("prompt_tokens"), usage.get("completion_tokens")


def backoff_delays(attempts: int, rng: random.Random) -> list[float]:
    """Exponential delays with jitter; provably nondecreasing.

    delay_n = 0.5 * 2**n plus up to 10% jitter, so each delay is at most
    1.1x its base while the next base doubles.
    """
    return [
        _BACKOFF_BASE * (2 ** n) * (1.0 + _BACKOFF_JITTER * rng.random())
        for n in range(attempts)
    ]


def complete(
    cfg: EndpointConfig,
    prompt: object,
    transport: Transport | None = None,
    cache: CompletionCache | None = None,
    sleep: Callable[[float], None] = time.sleep,
    limiter: TokenBucket | None = None,
) -> CompletionRecord:
    """One completion; cache hits never touch the transport.

    Raises AuthError (non-retryable), RetryExhausted, CompletionTimeout, or
    MalformedResponse.
    """
    text = _prompt_text(prompt)
    key = cache_key(cfg.model_name, text, cfg.temperature, cfg.max_output_tokens)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit

    transport = transport if transport is not None else HttpTransport()
    url, headers, payload = _build_request(cfg, text)
    delays = backoff_delays(cfg.max_retries, random.Random())
    last_error: str = ""
    timed_out = False
    for attempt in range(cfg.max_retries + 1):
        if attempt > 0:
            sleep(delays[attempt - 1])
        if limiter is not None:
            limiter.acquire()
        started = time.monotonic()
        try:
            response = transport.send(url, headers, payload,
                                      timeout=cfg.request_timeout)
        except TimeoutError as exc:
            last_error = f"timeout: {exc}"
            timed_out = True
            continue
        except ConnectionError as exc:
            last_error = f"connection error: {exc}"
            timed_out = False
            continue
        latency = time.monotonic() - started
        if response.status in (401, 403):
            raise AuthError(
                f"endpoint rejected credentials (HTTP {response.status})"
            )
        if response.status == 429 or 500 <= response.status < 600:
            last_error = f"HTTP {response.status}"
            timed_out = False
            continue
        if response.status != 200:
            raise GatewayError(
                f"unexpected HTTP {response.status}: {response.text[:200]!r}"
            )
        content, p_tokens, c_tokens = _extract_text(response)
        record = CompletionRecord(
            cache_key=key,
            prompt=text,
            response_text=content,
            latency=latency,
            model_name=cfg.model_name,
            prompt_tokens=p_tokens,
            completion_tokens=c_tokens,
            timestamp=time.time(),
        )
        if cache is not None:
            cache.put(record)
        return record
    if timed_out:
        raise CompletionTimeout(
            f"request timed out on all {cfg.max_retries + 1} attempts"
        )
    raise RetryExhausted(
        f"retries exhausted after {cfg.max_retries + 1} attempts; last: {last_error}"
    )


def complete_batch(
    cfg: EndpointConfig,
    prompts: Sequence[object],
    transport: Transport | None = None,
    cache: CompletionCache | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[CompletionRecord | GatewayError]:
    """Bounded-concurrency fan-out preserving input order.

    Each item is a CompletionRecord or the GatewayError that felled it;
    one failure never aborts the batch.
    """
    limiter = (TokenBucket(cfg.requests_per_second)
               if cfg.requests_per_second else None)

    def run_one(prompt: object) -> CompletionRecord | GatewayError:
        try:
            return complete(cfg, prompt, transport=transport, cache=cache,
                            sleep=sleep, limiter=limiter)
        except GatewayError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=cfg.max_concurrency) as pool:
        return list(pool.map(run_one, prompts))
