"""Reply generators: a scripted deterministic mock and an HTTP chat-completion client."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import TYPE_CHECKING, Protocol

import httpx

if TYPE_CHECKING:
    from .contagion import Prompt

ENV_URL = "EMOGRAPH_LLM_URL"
ENV_KEY = "EMOGRAPH_LLM_API_KEY"
ENV_MODEL = "EMOGRAPH_LLM_MODEL"


class ProviderError(RuntimeError):
    pass


class ProviderTransportError(ProviderError):
    pass


class ProviderStatusError(ProviderError):
    def __init__(self, status_code: int, detail: str = ""):
        self.status_code = status_code
        super().__init__(f"provider returned HTTP {status_code}" + (f": {detail}" if detail else ""))


class ProviderConfigError(ProviderError):
    pass


class GenerationProvider(Protocol):
    def generate(
        self,
        prompt: Prompt,
        max_tokens: int = 128,
        temperature: float = 0.0,
        seed: int | None = None,
    ) -> str: ...


def _position_key(round_no, source, target) -> tuple:
    return (int(round_no), str(source), str(target))


class MockProvider:
    """Replies looked up from a script; a pure function of the prompt.

    Script records (JSONL) are one of::

        {"round": 1, "source": 31, "target": 4, "reply": "..."}
        {"prompt_hash": "ab12...", "reply": "..."}
        {"default": "..."}

    Position entries win over hash entries, which win over the default.
    """

    def __init__(
        self,
        by_position: dict | None = None,
        by_hash: dict | None = None,
        default: str | None = None,
    ):
        self.by_position = dict(by_position or {})
        self.by_hash = dict(by_hash or {})
        self.default = default

    @classmethod
    def from_jsonl(cls, text: str) -> "MockProvider":
        by_position, by_hash, default = {}, {}, None
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"mock script line {lineno}: {exc}") from None
            if "default" in rec:
                default = rec["default"]
            elif "prompt_hash" in rec:
                by_hash[rec["prompt_hash"]] = rec["reply"]
            elif {"round", "source", "target", "reply"} <= rec.keys():
                by_position[_position_key(rec["round"], rec["source"], rec["target"])] = rec["reply"]
            else:
                raise ValueError(f"mock script line {lineno}: unrecognised record {sorted(rec)}")
        return cls(by_position, by_hash, default)

    @classmethod
    def from_file(cls, path: str | Path) -> "MockProvider":
        return cls.from_jsonl(Path(path).read_text("utf-8"))

    def generate(self, prompt, max_tokens=128, temperature=0.0, seed=None) -> str:
        key = _position_key(prompt.round, prompt.sender_id, prompt.receiver_id)
        if key in self.by_position:
            return self.by_position[key]
        if prompt.hash in self.by_hash:
            return self.by_hash[prompt.hash]
        if self.default is not None:
            return self.default
        raise ProviderError(f"mock script has no reply for round {key[0]} {key[1]} -> {key[2]}")


class HttpChatProvider:
    """Client for an OpenAI-style ``/chat/completions`` endpoint."""

    def __init__(
        self,
        url: str,
        api_key: str | None = None,
        model: str = "default",
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ):
        if not url:
            raise ProviderConfigError("chat-completion endpoint URL is empty")
        self.url = url
        self.api_key = api_key
        self.model = model
        self._client = client or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, env=None, **kwargs) -> "HttpChatProvider":
        env = os.environ if env is None else env
        url = env.get(ENV_URL)
        if not url:
            raise ProviderConfigError(f"{ENV_URL} is not set")
        model = kwargs.pop("model", None) or env.get(ENV_MODEL) or "default"
        return cls(url, api_key=env.get(ENV_KEY), model=model, **kwargs)

    def payload(self, prompt, max_tokens: int, temperature: float, seed: int | None) -> dict:
        body = {
            "model": self.model,
            "messages": prompt.messages(),
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        if seed is not None:
            body["seed"] = seed
        return body

    def generate(self, prompt, max_tokens=128, temperature=0.0, seed=None) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                self.url, headers=headers, json=self.payload(prompt, max_tokens, temperature, seed)
            )
        except httpx.TransportError as exc:
            raise ProviderTransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code >= 400:
            raise ProviderStatusError(resp.status_code, resp.text[:200])
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat-completion response: {exc!r}") from None
        if not isinstance(content, str):
            raise ProviderError("chat-completion response has no text content")
        return content

    def close(self) -> None:
        self._client.close()
