"""Chat-completion clients: the protocol, a deterministic mock, an HTTP client, and
retry / concurrency / cache wrappers that compose around any of them."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Protocol, runtime_checkable

import httpx

from ..vcm import ImageBuffer
from .prompts import ANSWERS_TAG

log = logging.getLogger(__name__)

API_KEY_ENV = "MSFUSE_API_KEY"
ENDPOINT_ENV = "MSFUSE_ENDPOINT"


class TransportError(RuntimeError):
    """The client could not obtain a reply (network, HTTP status, malformed body)."""


@runtime_checkable
class ChatClient(Protocol):
    client_id: str

    def describe_image(self, image: ImageBuffer, prompt: str) -> str: ...

    def complete(self, context: str, prompt: str) -> str: ...


def image_digest(image: ImageBuffer) -> str:
    h = hashlib.sha256()
    h.update(f"{image.width}x{image.height}:".encode())
    h.update(image.tobytes())
    return h.hexdigest()


def describe_payload(image: ImageBuffer, prompt: str) -> dict:
    # pixels are hashed raw so the key does not depend on PNG encoder output
    return {"endpoint": "describe_image", "prompt": prompt,
            "image": {"width": image.width, "height": image.height, "sha256": image_digest(image)}}


def complete_payload(context: str, prompt: str) -> dict:
    return {"endpoint": "complete", "context": context, "prompt": prompt}


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fingerprint(client_id: str, payload: dict) -> str:
    return hashlib.sha256(canonical_json({"client": client_id, "request": payload}).encode("utf-8")).hexdigest()


class _CallCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.calls = {"describe_image": 0, "complete": 0}

    def _count(self, endpoint: str) -> None:
        with self._lock:
            self.calls[endpoint] += 1

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())


class MockClient(_CallCounter):
    """Offline client whose replies are a pure function of (seed, request)."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = int(seed)
        self.client_id = f"mock:{self.seed}"

    def _digest(self, payload: dict) -> str:
        return hashlib.sha256(f"{self.seed}:{fingerprint(self.client_id, payload)}".encode()).hexdigest()

    @staticmethod
    def _score(hexdigest: str, offset: int) -> float:
        v = int(hexdigest[offset:offset + 8], 16) / 0xFFFFFFFF
        return round(0.05 + 0.94 * v, 2)

    def describe_image(self, image: ImageBuffer, prompt: str) -> str:
        self._count("describe_image")
        h = self._digest(describe_payload(image, prompt))
        where = "thermal" if "thermal" in prompt.lower() else "RGB"
        return (f"The green box in this {where} crop outlines an upright figure "
                f"about {image.height} px tall (ref {h[:8]}).")

    def complete(self, context: str, prompt: str) -> str:
        self._count("complete")
        h = self._digest(complete_payload(context, prompt))
        if ANSWERS_TAG in context:
            return (f"Rationale: both descriptions outline the same upright figure (ref {h[:6]}).\n"
                    f"[person, {self._score(h, 0)}]")
        return f"[person, {self._score(h, 0)}], [person, {self._score(h, 8)}]"


def _dig(obj: Any, path: str) -> Any:
    for part in path.split("."):
        if isinstance(obj, list):
            obj = obj[int(part)]
        else:
            obj = obj[part]
    return obj


class HttpChatClient(_CallCounter):
    """Client for a JSON chat-completion endpoint (``{model, messages}`` request body)."""

    def __init__(self, endpoint: str | None = None, model: str = "gpt-4o-mini",
                 api_key: str | None = None, response_path: str = "choices.0.message.content",
                 timeout: float = 60.0, transport: httpx.BaseTransport | None = None):
        super().__init__()
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        if not self.endpoint:
            raise ValueError(f"no endpoint configured (set {ENDPOINT_ENV} or pass endpoint=)")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.response_path = response_path
        self.client_id = f"http:{self.endpoint}:{self.model}"
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def _post(self, messages: list[dict]) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._http.post(self.endpoint, json={"model": self.model, "messages": messages},
                                   headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {self.endpoint} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"{self.endpoint} answered HTTP {resp.status_code}")
        try:
            text = _dig(resp.json(), self.response_path)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"reply has no text at {self.response_path!r}") from exc
        if not isinstance(text, str):
            raise TransportError(f"reply text at {self.response_path!r} is not a string")
        return text

    def describe_image(self, image: ImageBuffer, prompt: str) -> str:
        from ..images import encode_png

        self._count("describe_image")
        b64 = base64.b64encode(encode_png(image)).decode("ascii")
        content = [
            {"type": "text", "text": prompt},
            {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}},
        ]
        return self._post([{"role": "user", "content": content}])

    def complete(self, context: str, prompt: str) -> str:
        self._count("complete")
        return self._post([{"role": "user", "content": f"{context}\n\n{prompt}"}])

    def close(self) -> None:
        self._http.close()


class RetryingClient:
    """Retries TransportError ``retries`` times with exponential backoff."""

    def __init__(self, inner: ChatClient, retries: int = 3, base_delay: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep):
        self.inner = inner
        self.retries = retries
        self.base_delay = base_delay
        self._sleep = sleep
        self.client_id = inner.client_id

    def _call(self, fn, *args):
        for attempt in range(self.retries + 1):
            try:
                return fn(*args)
            except TransportError as exc:
                if attempt == self.retries:
                    raise
                delay = self.base_delay * (2 ** attempt)
                log.warning("transport error (%s); retry %d/%d in %.2fs", exc, attempt + 1, self.retries, delay)
                self._sleep(delay)

    def describe_image(self, image: ImageBuffer, prompt: str) -> str:
        return self._call(self.inner.describe_image, image, prompt)

    def complete(self, context: str, prompt: str) -> str:
        return self._call(self.inner.complete, context, prompt)


class BoundedClient:
    """Caps the number of in-flight requests to the wrapped client."""

    def __init__(self, inner: ChatClient, max_inflight: int = 4):
        if max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        self.inner = inner
        self.client_id = inner.client_id
        self._sem = threading.BoundedSemaphore(max_inflight)

    def describe_image(self, image: ImageBuffer, prompt: str) -> str:
        with self._sem:
            return self.inner.describe_image(image, prompt)

    def complete(self, context: str, prompt: str) -> str:
        with self._sem:
            return self.inner.complete(context, prompt)


class CachingClient:
    """Append-only on-disk response cache, one JSON record per request fingerprint."""

    def __init__(self, inner: ChatClient, cache_dir: str | Path):
        self.inner = inner
        self.client_id = inner.client_id
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()
        self._stats_lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _path(self, fp: str) -> Path:
        return self.cache_dir / f"{fp}.json"

    def _lookup(self, fp: str) -> str | None:
        path = self._path(fp)
        if not path.exists():
            return None
        record = json.loads(path.read_text(encoding="utf-8"))
        if record.get("fingerprint") != fp:
            raise ValueError(f"cache record {path} does not match its fingerprint")
        return record["response"]

    def _store(self, fp: str, endpoint: str, response: str) -> None:
        with self._write_lock:
            path = self._path(fp)
            if path.exists():
                return
            record = {
                "fingerprint": fp,
                "client_id": self.client_id,
                "endpoint": endpoint,
                "response": response,
                "created_at": datetime.now(timezone.utc).isoformat(),
            }
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(record, sort_keys=True, indent=1, ensure_ascii=False), encoding="utf-8")
            os.replace(tmp, path)

    def _cached(self, payload: dict, call):
        fp = fingerprint(self.client_id, payload)
        hit = self._lookup(fp)
        with self._stats_lock:
            if hit is not None:
                self.hits += 1
            else:
                self.misses += 1
        if hit is not None:
            return hit
        response = call()
        self._store(fp, payload["endpoint"], response)
        return response

    def describe_image(self, image: ImageBuffer, prompt: str) -> str:
        return self._cached(describe_payload(image, prompt), lambda: self.inner.describe_image(image, prompt))

    def complete(self, context: str, prompt: str) -> str:
        return self._cached(complete_payload(context, prompt), lambda: self.inner.complete(context, prompt))


def build_client(kind: str = "mock", *, seed: int = 0, cache_dir: str | Path | None = None,
                 max_inflight: int = 4, retries: int = 3, http_options: dict | None = None,
                 inner: ChatClient | None = None):
    """Assemble ``cache -> retry -> in-flight bound -> base client``.

    Returns ``(client, base)``; ``base`` exposes the raw call counters.
    """
    if inner is not None:
        base = inner
    elif kind == "mock":
        base = MockClient(seed)
    elif kind == "http":
        base = HttpChatClient(**(http_options or {}))
    else:
        raise ValueError(f"unknown client kind {kind!r}")
    client: Any = BoundedClient(base, max_inflight)
    client = RetryingClient(client, retries=retries)
    if cache_dir is not None:
        client = CachingClient(client, cache_dir)
    return client, base
