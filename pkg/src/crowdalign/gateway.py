"""Provider-agnostic chat-completion client with retries, token accounting,
prompt templates, and an offline replay cache."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .behaviors import BEHAVIOR_DESCRIPTIONS, LABEL_ORDER

RETRY_BASE_SECONDS = 1.0
RETRY_FACTOR = 2.0
MAX_ATTEMPTS = 5
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})
CREDENTIAL_ENV_VAR = "CROWDALIGN_API_KEY"


class GatewayConfigError(Exception):
    """Raised before any request when the gateway is not usable."""


class GatewayError(Exception):
    """Raised after retries are exhausted; carries the last HTTP status."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class TemplateError(Exception):
    pass


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system: str
    user: str
    temperature: float
    max_tokens: int = 1024
    response_format: str = "text"  # "text" | "json"

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def cache_key(self) -> str:
        payload = json.dumps(
            {
                "model": self.model,
                "system": self.system,
                "user": self.user,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "response_format": self.response_format,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int
    completion_tokens: int
    model: str
    latency_ms: float

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass
class CostLedger:
    """Thread-safe accumulator of per-call token usage."""

    calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    per_model: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, response: ChatResponse) -> None:
        with self._lock:
            self.calls += 1
            self.prompt_tokens += response.prompt_tokens
            self.completion_tokens += response.completion_tokens
            entry = self.per_model.setdefault(
                response.model, {"prompt_tokens": 0, "completion_tokens": 0, "calls": 0}
            )
            entry["prompt_tokens"] += response.prompt_tokens
            entry["completion_tokens"] += response.completion_tokens
            entry["calls"] += 1

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "calls": self.calls,
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
                "per_model": {
                    model: dict(usage) for model, usage in sorted(self.per_model.items())
                },
            }


@dataclass
class ReplayCache:
    """Request-hash -> response store so integration tests run offline."""

    path: Path | None = None
    entries: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ReplayCache":
        path = Path(path)
        entries = {}
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                entries = json.load(fh)
        return cls(path=path, entries=entries)

    def get(self, request: ChatRequest) -> ChatResponse | None:
        raw = self.entries.get(request.cache_key())
        if raw is None:
            return None
        return ChatResponse(
            content=raw["content"],
            prompt_tokens=int(raw.get("prompt_tokens", 0)),
            completion_tokens=int(raw.get("completion_tokens", 0)),
            model=raw.get("model", request.model),
            latency_ms=0.0,
        )

    def put(self, request: ChatRequest, response: ChatResponse) -> None:
        self.entries[request.cache_key()] = {
            "content": response.content,
            "prompt_tokens": response.prompt_tokens,
            "completion_tokens": response.completion_tokens,
            "model": response.model,
        }

    def save(self) -> None:
        if self.path is None:
            raise ValueError("replay cache has no backing path")
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.entries, fh, indent=2, sort_keys=True)


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4.1"
    in_flight_limit: int = 8
    timeout_s: float = 60.0
    retry_base_s: float = RETRY_BASE_SECONDS
    max_tokens: int = 1024
    # model id -> (prompt $ per 1M tokens, completion $ per 1M tokens)
    price_table: dict = field(default_factory=dict)


class LlmGateway:
    """Chat-completions client over the common JSON wire format.

    ``mode`` is one of "live", "record" (live + fill cache), or "replay"
    (cache only; a miss is an error)."""

    def __init__(
        self,
        config: GatewayConfig | None = None,
        api_key: str | None = None,
        cache: ReplayCache | None = None,
        mode: str = "live",
        session: requests.Session | None = None,
    ):
        self.config = config or GatewayConfig()
        self.mode = mode
        self.cache = cache
        self.ledger = CostLedger()
        self._session = session or requests.Session()
        self._semaphore = threading.Semaphore(self.config.in_flight_limit)
        if mode not in ("live", "record", "replay"):
            raise GatewayConfigError(f"unknown gateway mode: {mode!r}")
        if mode in ("record", "replay") and cache is None:
            raise GatewayConfigError(f"{mode} mode requires a replay cache")
        self.api_key = api_key or os.environ.get(CREDENTIAL_ENV_VAR)
        if mode != "replay" and not self.api_key:
            raise GatewayConfigError(
                f"missing credential: set {CREDENTIAL_ENV_VAR} or pass api_key"
            )

    # -- request path -------------------------------------------------------

    def chat_request(
        self,
        system: str,
        user: str,
        temperature: float,
        response_format: str = "text",
    ) -> ChatRequest:
        return ChatRequest(
            model=self.config.model,
            system=system,
            user=user,
            temperature=temperature,
            max_tokens=self.config.max_tokens,
            response_format=response_format,
        )

    def chat(
        self,
        request: ChatRequest | None = None,
        system: str = "",
        user: str = "",
        temperature: float = 0.0,
        response_format: str = "text",
    ) -> ChatResponse:
        if request is None:
            request = self.chat_request(system, user, temperature, response_format)
        if self.cache is not None and self.mode in ("record", "replay"):
            cached = self.cache.get(request)
            if cached is not None:
                self.ledger.record(cached)
                return cached
            if self.mode == "replay":
                raise GatewayError(
                    f"replay cache miss for request {request.cache_key()[:12]}"
                )
        response = self._post_with_retries(request)
        self.ledger.record(response)
        if self.cache is not None and self.mode == "record":
            self.cache.put(request, response)
        return response

    def chat_json(self, system: str, user: str, temperature: float) -> dict:
        response = self.chat(
            system=system, user=user, temperature=temperature, response_format="json"
        )
        text = response.content.strip()
        if text.startswith("```"):
            text = text.strip("`")
            if text.startswith("json"):
                text = text[4:]
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"response is not valid JSON: {exc}") from None

    def _post_with_retries(self, request: ChatRequest) -> ChatResponse:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.response_format == "json":
            body["response_format"] = {"type": "json_object"}
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_status: int | None = None
        last_error = ""
        delay = self.config.retry_base_s
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                with self._semaphore:
                    started = time.monotonic()
                    raw = self._session.post(
                        url, json=body, headers=headers, timeout=self.config.timeout_s
                    )
                    latency_ms = (time.monotonic() - started) * 1000.0
            except requests.RequestException as exc:
                last_error = str(exc)
                last_status = None
            else:
                if raw.status_code == 200:
                    payload = raw.json()
                    usage = payload.get("usage", {})
                    return ChatResponse(
                        content=payload["choices"][0]["message"]["content"],
                        prompt_tokens=int(usage.get("prompt_tokens", 0)),
                        completion_tokens=int(usage.get("completion_tokens", 0)),
                        model=payload.get("model", request.model),
                        latency_ms=latency_ms,
                    )
                last_status = raw.status_code
                last_error = raw.text[:500]
                if raw.status_code not in RETRYABLE_STATUSES:
                    raise GatewayError(
                        f"provider error {raw.status_code}: {last_error}",
                        status=raw.status_code,
                    )
            if attempt < MAX_ATTEMPTS:
                time.sleep(delay)
                delay *= RETRY_FACTOR
        raise GatewayError(
            f"exhausted {MAX_ATTEMPTS} attempts; last status {last_status}: "
            f"{last_error}",
            status=last_status,
        )


# ---------------------------------------------------------------------------
# prompt templates


def _behavior_label_lines() -> str:
    return "\n".join(
        f"- {label.value}: {BEHAVIOR_DESCRIPTIONS[label]}" for label in LABEL_ORDER
    )


_CLASSIFIER_SYSTEM = (
    "You are a behavior analyst categorizing how individuals responded during "
    "an active shooter incident.\n"
    "Based on the agent's memories, actions, moods, plans, and dialog, "
    "classify its behavior into exactly ONE of these categories that best "
    "describes its behavior:\n\n"
    "Behavior labels with descriptions:\n{behavior_labels}\n\n"
    "Output:\n"
    "- Reasoning: Your reasoning for the classification.\n"
    "- Classification: A single behavior label from the list of behaviors.\n"
    "- Ranking: A list of behaviors ranked by likelihood."
)

_CLASSIFIER_USER = (
    "Agent's trajectory data:\n"
    "- States: {states_text}\n"
    "- Actions: {actions_text}\n"
    "- Memories: {memories_text}"
)

_PERSONA_WRITER_SYSTEM = (
    "You are an expert in human behavior during crisis situations. Your task "
    "is to adjust a person's personality traits to make them more likely to "
    "exhibit a specific behavior during an active shooter incident.\n\n"
    "Behavior labels with descriptions:\n{behavior_labels}\n\n"
    "Edit only the descriptive fields (personality traits, emotional "
    "disposition, motivations and goals, communication style, knowledge "
    "scope, backstory). Never change identity fields. Keep each field under "
    "500 characters and never insert explicit action instructions. Reply "
    "with a JSON object containing only the descriptive fields you changed."
)

_PERSONA_WRITER_USER = (
    "Current persona:\n"
    "- Name: {name}\n"
    "- Role: {role}\n"
    "- Age: {age}\n"
    "- Gender: {gender}\n"
    "- Pronouns: {pronouns}\n"
    "- Personality traits: {personality_traits}\n"
    "- Emotional disposition: {emotional_disposition}\n"
    "- Motivations and goals: {motivations_goals}\n"
    "- Communication style: {communication_style}\n"
    "- Knowledge scope: {knowledge_scope}\n"
    "- Backstory: {backstory}\n\n"
    "Current behavior: {current_behavior}\n\n"
    "Target behavior: {target_behavior}\n\n"
    "Please suggest adjustments to the persona's traits that would make this "
    "person more likely to exhibit the target behavior during a crisis."
)

_AGENT_DECISION_SYSTEM = (
    "You are roleplaying {name}, a {age}-year-old {role} ({pronouns}), caught "
    "in an unfolding incident inside a building.\n"
    "- Personality traits: {personality_traits}\n"
    "- Emotional disposition: {emotional_disposition}\n"
    "- Motivations and goals: {motivations_goals}\n"
    "- Communication style: {communication_style}\n"
    "- Knowledge scope: {knowledge_scope}\n"
    "- Backstory: {backstory}\n\n"
    "Decide what this person does next. Reply with a JSON object: "
    '{{"thought": str, "action": {{"vocal_mode": "out_loud"|"whisper"|"silent", '
    '"utterance": str, "movement": "stay_still"|"walk"|"sprint", '
    '"action_id": str}}, "update": {{"mood": str, "memory": str}}}}. '
    "The action_id must be one of the offered identifiers."
)

_AGENT_DECISION_USER = (
    "Current observation:\n{observation}\n\n"
    "Offered action identifiers: {offered_actions}\n\n"
    "Choose exactly one action_id from the offered list."
)

_TEMPLATES = {
    "classifier": (_CLASSIFIER_SYSTEM, _CLASSIFIER_USER),
    "persona_writer": (_PERSONA_WRITER_SYSTEM, _PERSONA_WRITER_USER),
    "agent_decision": (_AGENT_DECISION_SYSTEM, _AGENT_DECISION_USER),
}


class _StrictDict(dict):
    def __missing__(self, key: str) -> str:
        raise TemplateError(f"unbound placeholder: {key}")


def render_template(template_id: str, bindings: dict) -> tuple[str, str]:
    """Render (system, user) prompts; every placeholder must be bound."""
    if template_id not in _TEMPLATES:
        raise TemplateError(f"unknown template: {template_id!r}")
    system_tpl, user_tpl = _TEMPLATES[template_id]
    values = _StrictDict(behavior_labels=_behavior_label_lines(), **bindings)
    system = system_tpl.format_map(values)
    user = user_tpl.format_map(values)
    return system, user
