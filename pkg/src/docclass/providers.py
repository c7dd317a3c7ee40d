"""Clients for embedding and vision-chat inference endpoints.

Two HTTP routes are spoken, following the common inference-server convention:

* ``POST {base_url}/v1/embeddings`` with ``{"model": ..., "input": ...}``.
  Text input is a string; image input is a list of content parts
  (``text`` instruction + ``image_url`` PNG data URI).
* ``POST {base_url}/v1/chat/completions`` with a system message and a user
  message whose content carries the prompt text and the page as an
  ``image_url`` data URI.

The ``mock_embedding`` and ``mock_chat`` kinds answer in-process from a list
of :class:`MockRule` and never touch the network.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import httpx
import numpy as np

from .dataset import PageImage
from .errors import ContentFiltered, InvalidRequest, ProviderError, ZeroVector
from .vectorspace import as_vector

log = logging.getLogger(__name__)

KINDS = ("embedding", "vision_chat", "mock_embedding", "mock_chat")
EMBEDDING_KINDS = ("embedding", "mock_embedding")
CHAT_KINDS = ("vision_chat", "mock_chat")
AUTH_ENV = "DOCCLASS_AUTH_TOKEN"
BACKOFF_START = 0.5


@dataclass(frozen=True)
class MockRule:
    """One routing rule for a mock provider.

    ``match`` is a substring tested against the request key; ``None`` marks
    the default rule. Embedding mocks use ``seed``, chat mocks use ``text``.
    """

    match: str | None = None
    seed: int | None = None
    text: str | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> MockRule:
        if data.get("default"):
            return cls(None, data.get("seed"), data.get("text"))
        return cls(data.get("match"), data.get("seed"), data.get("text"))

    def to_mapping(self) -> dict:
        out: dict[str, Any] = {"default": True} if self.match is None else {"match": self.match}
        if self.seed is not None:
            out["seed"] = self.seed
        if self.text is not None:
            out["text"] = self.text
        return out

    def matches(self, key: str) -> bool:
        return self.match is None or self.match in key


@dataclass
class ProviderConfig:
    provider_id: str
    kind: str
    model_name: str = ""
    base_url: str | None = None
    timeout: float = 60.0
    max_retries: int = 2
    auth_token: str | None = None
    # mock-only settings
    dim: int = 64
    rules: list[MockRule] = field(default_factory=list)
    jitter: float = 0.0
    scale: float = 1.0
    # chat decoding
    temperature: float | None = 0.0
    max_tokens: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.is_mock:
            if self.base_url:
                raise ValueError(f"{self.provider_id}: mock providers take no base_url")
            if not any(r.match is None for r in self.rules):
                raise ValueError(f"{self.provider_id}: mock provider needs a default rule")
        elif not self.base_url:
            raise ValueError(f"{self.provider_id}: base_url is required for {self.kind}")
        self.model_name = self.model_name or self.provider_id

    @property
    def is_mock(self) -> bool:
        return self.kind.startswith("mock_")

    @classmethod
    def from_mapping(cls, data: dict) -> ProviderConfig:
        data = dict(data)
        data["rules"] = [r if isinstance(r, MockRule) else MockRule.from_mapping(r) for r in data.get("rules", [])]
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})

    def resolved_token(self) -> str | None:
        return os.environ.get(AUTH_ENV) or self.auth_token

    def public_dict(self) -> dict:
        """Settings that identify this provider's outputs; never includes the token."""
        out = {"provider_id": self.provider_id, "kind": self.kind, "model_name": self.model_name}
        if self.is_mock:
            out.update(dim=self.dim, jitter=self.jitter, scale=self.scale, rules=[r.to_mapping() for r in self.rules])
        else:
            out["base_url"] = self.base_url
        if self.kind in CHAT_KINDS:
            out.update(temperature=self.temperature, max_tokens=self.max_tokens)
        return out


def load_registry(entries) -> dict[str, ProviderConfig]:
    """Build ``provider_id -> ProviderConfig`` from a config-file ``providers`` section."""
    if isinstance(entries, dict):
        entries = [dict(v, provider_id=k) for k, v in entries.items()]
    registry = {}
    for entry in entries or []:
        cfg = ProviderConfig.from_mapping(entry)
        if cfg.provider_id in registry:
            raise ValueError(f"duplicate provider_id {cfg.provider_id!r}")
        registry[cfg.provider_id] = cfg
    return registry


def _digest(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(len(p).to_bytes(8, "big"))
        h.update(p)
    return h.digest()


def _seeded_unit(seed_bytes: bytes, dim: int) -> np.ndarray:
    rng = np.random.default_rng(int.from_bytes(seed_bytes[:16], "big"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def page_data_uri(page: PageImage) -> str:
    return "data:image/png;base64," + base64.b64encode(page.to_png()).decode("ascii")


class Telemetry:
    def __init__(self):
        self._lock = threading.Lock()
        self.counts = {"requests": 0, "retries": 0, "failures": 0}

    def bump(self, name: str, n: int = 1) -> None:
        with self._lock:
            self.counts[name] = self.counts.get(name, 0) + n

    def __getitem__(self, name):
        return self.counts.get(name, 0)


class Provider:
    """Client for one configured endpoint; safe to share across threads."""

    def __init__(self, cfg: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self.telemetry = Telemetry()
        self._sleep = sleep
        self._client = None
        if not cfg.is_mock:
            headers = {}
            token = cfg.resolved_token()
            if token:
                headers["Authorization"] = f"Bearer {token}"
            self._client = httpx.Client(base_url=cfg.base_url, headers=headers, timeout=cfg.timeout, transport=transport)
        # (provider_id, digest) -> unit vector; populated by classify.embed_class_definitions
        self.cache: dict[tuple[str, str], np.ndarray] = {}
        self._cache_lock = threading.Lock()

    def close(self):
        if self._client is not None:
            self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _require(self, kinds):
        if self.cfg.kind not in kinds:
            raise ProviderError(f"provider {self.cfg.provider_id} is {self.cfg.kind}, need one of {kinds}", kind="config")

    def _rule(self, key: str) -> MockRule:
        for rule in self.cfg.rules:
            if rule.matches(key):
                return rule
        raise AssertionError("unreachable: default rule enforced by ProviderConfig")

    # -- HTTP ---------------------------------------------------------------

    def _post(self, route: str, payload: dict) -> dict:
        attempt = 0
        while True:
            self.telemetry.bump("requests")
            try:
                resp = self._client.post(route, json=payload)
            except httpx.TimeoutException as exc:
                err = ProviderError(f"timeout after {self.cfg.timeout}s", kind="timeout")
                retryable = True
                cause = exc
            except httpx.TransportError as exc:
                err = ProviderError(f"transport error: {exc}", kind="transport")
                retryable = True
                cause = exc
            else:
                cause = None
                if resp.status_code < 400:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise ProviderError("response is not JSON", kind="decode") from exc
                retryable = resp.status_code >= 500
                err = ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}", kind="http_status",
                                    http_status=resp.status_code)
                if _is_content_filter(resp):
                    raise ContentFiltered(http_status=resp.status_code)
            if not retryable or attempt >= self.cfg.max_retries:
                self.telemetry.bump("failures")
                raise err from cause
            delay = BACKOFF_START * 2 ** attempt
            attempt += 1
            self.telemetry.bump("retries")
            log.info("%s: %s, retry %d in %.1fs", self.cfg.provider_id, err, attempt, delay)
            self._sleep(delay)

    def _embedding_from(self, body: dict) -> np.ndarray:
        try:
            raw = body["data"][0]["embedding"]
            return as_vector(raw)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}", kind="decode") from exc

    # -- public API -----------------------------------------------------------

    def _receive(self, raw: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(raw)
        if norm == 0.0:
            raise ZeroVector(f"{self.cfg.provider_id} returned a zero embedding")
        return raw / norm

    def raw_embed_image(self, page: PageImage, instruction: str, key: str = "") -> np.ndarray:
        self._require(EMBEDDING_KINDS)
        if self.cfg.is_mock:
            self.telemetry.bump("requests")
            return self._mock_vector(key, page.to_png(), instruction.encode())
        payload = {
            "model": self.cfg.model_name,
            "input": [
                {"type": "text", "text": instruction},
                {"type": "image_url", "image_url": {"url": page_data_uri(page)}},
            ],
        }
        return self._embedding_from(self._post("/v1/embeddings", payload))

    def raw_embed_text(self, text: str, key: str = "") -> np.ndarray:
        self._require(EMBEDDING_KINDS)
        if not text or not text.strip():
            raise InvalidRequest("empty text")
        if self.cfg.is_mock:
            self.telemetry.bump("requests")
            return self._mock_vector(key or text, text.encode())
        payload = {"model": self.cfg.model_name, "input": text}
        return self._embedding_from(self._post("/v1/embeddings", payload))

    def embed_image(self, page: PageImage, instruction: str, key: str = "") -> np.ndarray:
        """Embed a page image; the result is unit-norm.

        ``key`` is a routing hint (e.g. doc id and file name) consulted only by
        mock providers.
        """
        return self._receive(self.raw_embed_image(page, instruction, key))

    def embed_text(self, text: str, key: str = "") -> np.ndarray:
        return self._receive(self.raw_embed_text(text, key))

    def complete_vision_prompt(self, system: str, user: str, page: PageImage, key: str = "") -> str:
        self._require(CHAT_KINDS)
        if self.cfg.is_mock:
            self.telemetry.bump("requests")
            rule = self._rule(key)
            return rule.text if rule.text is not None else ""
        payload: dict[str, Any] = {
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": system},
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": user},
                        {"type": "image_url", "image_url": {"url": page_data_uri(page)}},
                    ],
                },
            ],
        }
        if self.cfg.temperature is not None:
            payload["temperature"] = self.cfg.temperature
        if self.cfg.max_tokens is not None:
            payload["max_tokens"] = self.cfg.max_tokens
        body = self._post("/v1/chat/completions", payload)
        try:
            choice = body["choices"][0]
            if choice.get("finish_reason") == "content_filter":
                raise ContentFiltered()
            content = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}", kind="decode") from exc
        if isinstance(content, list):
            content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
        if not isinstance(content, str):
            raise ProviderError("chat content is not text", kind="decode")
        return content

    # -- mock -----------------------------------------------------------------

    def _mock_vector(self, key: str, *payload: bytes) -> np.ndarray:
        rule = self._rule(key)
        dim = self.cfg.dim
        if rule.seed is not None:
            base = _seeded_unit(_digest(b"seed", str(rule.seed).encode()), dim)
        else:
            base = _seeded_unit(_digest(b"input", *payload), dim)
        if self.cfg.jitter:
            noise = _seeded_unit(_digest(b"jitter", key.encode(), *payload), dim)
            base = base + self.cfg.jitter * noise
        return self.cfg.scale * base


def _is_content_filter(resp: httpx.Response) -> bool:
    if resp.status_code not in (400, 403, 422, 451):
        return False
    try:
        body = resp.json()
    except ValueError:
        return False
    err = body.get("error") if isinstance(body, dict) else None
    code = err.get("code") if isinstance(err, dict) else None
    return code in ("content_filter", "content_policy_violation")


# Module-level conveniences mirroring the client methods.

def embed_image(page: PageImage, instruction: str, cfg: ProviderConfig, key: str = "") -> np.ndarray:
    with Provider(cfg) as p:
        return p.embed_image(page, instruction, key)


def embed_text(text: str, cfg: ProviderConfig, key: str = "") -> np.ndarray:
    with Provider(cfg) as p:
        return p.embed_text(text, key)


def complete_vision_prompt(system: str, user: str, page: PageImage, cfg: ProviderConfig, key: str = "") -> str:
    with Provider(cfg) as p:
        return p.complete_vision_prompt(system, user, page, key)
