"""Chat-completions adapter with tool calling, plus record/replay cassettes."""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import httpx

from .agents import Agent, AgentOutput, Results
from .errors import AdapterError
from .executor import CallRequest

log = logging.getLogger(__name__)

CAP_NOTICE = "The function call limit has been reached. Give your final answer now."


@dataclass
class EndpointConfig:
    model: str = "gpt-4.1"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    # None omits the field, for providers that reject it.
    temperature: float | None = 0.0
    top_p: float | None = 1.0
    reasoning_effort: str | None = None
    timeout: float = 120.0
    max_concurrency: int = 4
    cassette: str | None = None
    cassette_mode: str = "replay"  # "record" | "replay"


class Cassette:
    """Ordered request/response log for offline replay.

    In ``record`` mode requests go to ``inner`` and each exchange is appended;
    call :meth:`save` afterwards. In ``replay`` mode responses are served in
    order and a request body that differs from the recording is an error.
    """

    def __init__(self, path: str | Path, mode: str = "replay", inner: httpx.BaseTransport | None = None):
        self.path = Path(path)
        self.mode = mode
        self.inner = inner
        self.lock = threading.Lock()
        if mode == "replay":
            self.interactions = json.loads(self.path.read_text())["interactions"]
        elif mode == "record":
            self.interactions = []
        else:
            raise ValueError(f"unknown cassette mode {mode!r}")
        self.position = 0

    def _handle(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content or b"null")
        with self.lock:
            if self.mode == "record":
                inner = self.inner or httpx.HTTPTransport()
                response = inner.handle_request(request)
                response.read()
                self.interactions.append(
                    {"request": body, "status": response.status_code, "response": response.json()}
                )
                return httpx.Response(response.status_code, json=response.json())
            if self.position >= len(self.interactions):
                raise httpx.TransportError("cassette exhausted")
            entry = self.interactions[self.position]
            self.position += 1
        if entry["request"] != body:
            raise httpx.TransportError(f"request {self.position - 1} does not match cassette")
        return httpx.Response(entry["status"], json=entry["response"])

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self._handle)

    def save(self) -> None:
        self.path.write_text(json.dumps({"interactions": self.interactions}, indent=1))


class ChatClient:
    """Thread-safe client shared by all agents in a sweep; honors ``max_concurrency``."""

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.cassette = None
        if transport is None and config.cassette:
            self.cassette = Cassette(config.cassette, config.cassette_mode)
            transport = self.cassette.transport()
        headers = {}
        key = os.environ.get(config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self.http = httpx.Client(
            base_url=config.base_url, headers=headers, timeout=config.timeout, transport=transport
        )
        self.slots = threading.BoundedSemaphore(max(1, config.max_concurrency))

    def payload(self, messages: list[dict[str, Any]], tools: list[dict[str, Any]], final: bool) -> dict[str, Any]:
        cfg = self.config
        body: dict[str, Any] = {"model": cfg.model, "messages": messages, "tools": tools}
        if final:
            body["tool_choice"] = "none"
        if cfg.temperature is not None:
            body["temperature"] = cfg.temperature
        if cfg.top_p is not None:
            body["top_p"] = cfg.top_p
        if cfg.reasoning_effort:
            body["reasoning_effort"] = cfg.reasoning_effort
        return body

    def complete(self, body: dict[str, Any]) -> dict[str, Any]:
        with self.slots:
            try:
                resp = self.http.post("/chat/completions", json=body)
            except httpx.HTTPError as exc:
                raise AdapterError(f"transport error: {exc}") from exc
        if resp.status_code >= 400:
            raise AdapterError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise AdapterError("endpoint returned non-JSON body") from exc

    def close(self) -> None:
        if self.cassette is not None and self.cassette.mode == "record":
            self.cassette.save()
        self.http.close()


@dataclass
class AgentTurnInput:
    messages: list[dict[str, Any]]
    tools: list[dict[str, Any]]
    final: bool = False


@dataclass
class TurnOutput:
    output: AgentOutput
    assistant_message: dict[str, Any] = field(default_factory=dict)


def llm_adapter_turn(client: ChatClient, turn: AgentTurnInput) -> TurnOutput:
    """One model round-trip mapped onto call requests or a final answer.

    Malformed tool-call arguments are reported in ``output.error`` and the
    turn is treated as making no calls.
    """
    data = client.complete(client.payload(turn.messages, turn.tools, turn.final))
    try:
        message = data["choices"][0]["message"]
    except (KeyError, IndexError, TypeError) as exc:
        raise AdapterError(f"unexpected completion shape: {str(data)[:200]}") from exc

    text = message.get("content") or ""
    calls = []
    for tc in message.get("tool_calls") or []:
        fn = tc.get("function", {})
        try:
            args = json.loads(fn.get("arguments") or "{}")
            if not isinstance(args, dict):
                raise ValueError("arguments are not an object")
        except ValueError as exc:
            log.warning("malformed tool call %r: %s", fn.get("name"), exc)
            return TurnOutput(AgentOutput([], text, error=f"malformed tool call: {exc}"), message)
        calls.append(CallRequest(fn.get("name", ""), args, call_id=tc.get("id")))
    if turn.final:
        calls = []
    return TurnOutput(AgentOutput(calls, text), message)


class LLMAgent(Agent):
    name = "llm"

    def __init__(self, client: ChatClient) -> None:
        self.client = client
        self.messages: list[dict[str, Any]] = []
        self.errors: list[str] = []

    def begin(self, prompt: str, tools: list[dict[str, Any]]) -> None:
        super().begin(prompt, tools)
        self.messages = [{"role": "user", "content": prompt}]

    def _append_results(self, results: Results) -> None:
        for i, (req, resp) in enumerate(results):
            self.messages.append(
                {"role": "tool", "tool_call_id": req.call_id or f"call_{i}", "content": resp.to_json()}
            )

    def _turn(self, final: bool) -> AgentOutput:
        out = llm_adapter_turn(self.client, AgentTurnInput(self.messages, self.tools, final))
        msg = {"role": "assistant", "content": out.assistant_message.get("content")}
        if out.output.calls:
            msg["tool_calls"] = out.assistant_message.get("tool_calls")
        self.messages.append(msg)
        if out.output.error:
            self.errors.append(out.output.error)
        return out.output

    def act(self, results: Results) -> AgentOutput:
        self._append_results(results)
        return self._turn(final=False)

    def conclude(self, results: Results) -> str:
        self._append_results(results)
        self.messages.append({"role": "user", "content": CAP_NOTICE})
        return self._turn(final=True).text or ""
