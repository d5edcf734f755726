"""Persona rewriting toward target behaviors.

Two modes implement the same contract: a deterministic trait-shift writer for
offline runs, and an LLM writer that edits descriptive text fields only.
Identity fields are immutable under both.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Protocol

from .behaviors import BehaviorLabel
from .personas import (
    DESCRIPTIVE_FIELDS,
    IDENTITY_FIELDS,
    MAX_DESCRIPTIVE_CHARS,
    TRAIT_NAMES,
    Persona,
)

log = logging.getLogger(__name__)

DEFAULT_TRAIT_STEP = 0.5

# Phrases that would turn an implicit persona into an explicit directive.
DIRECTIVE_DENYLIST = (
    "always choose",
    "always fight",
    "always hide",
    "always run",
    "always freeze",
    "you must",
    "in every dangerous situation",
)


@lru_cache(maxsize=1)
def load_archetypes(path: str | None = None) -> dict[BehaviorLabel, dict[str, float]]:
    """Behavior -> five-trait anchor table (config data)."""
    table_path = Path(path) if path else Path(__file__).parent / "data" / "archetypes.json"
    with open(table_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {
        BehaviorLabel(name): {t: float(vals[t]) for t in TRAIT_NAMES}
        for name, vals in raw.items()
    }


def rewrite_trait(
    persona: Persona,
    target: BehaviorLabel,
    step: float = DEFAULT_TRAIT_STEP,
    archetypes: Mapping[BehaviorLabel, Mapping[str, float]] | None = None,
) -> Persona:
    """Shift the trait vector ``step`` of the way toward the target anchor.

    Identity and descriptive text are untouched; each coordinate contracts
    toward the anchor by exactly (1 - step).
    """
    if not 0.0 < step <= 1.0:
        raise ValueError("step must be in (0, 1]")
    anchors = archetypes or load_archetypes()
    anchor = anchors[target]
    new_traits = {}
    for name in TRAIT_NAMES:
        current = persona.traits[name]
        shifted = current + step * (anchor[name] - current)
        new_traits[name] = min(1.0, max(0.0, shifted))
    return persona.with_traits(new_traits)


def contains_directive(text: str, denylist: tuple[str, ...] = DIRECTIVE_DENYLIST) -> bool:
    lowered = text.lower()
    return any(phrase in lowered for phrase in denylist)


def _validate_rewrite_payload(
    persona: Persona, payload: Mapping, denylist: tuple[str, ...]
) -> dict[str, str]:
    """Check an LLM rewrite response; returns the descriptive updates."""
    if not isinstance(payload, Mapping):
        raise ValueError("rewrite response must be a JSON object")
    identity = payload.get("identity", payload)
    for fname in IDENTITY_FIELDS:
        if fname in identity:
            old = getattr(persona.identity, fname)
            new = identity[fname]
            if str(new) != str(old):
                raise ValueError(f"identity field {fname!r} was altered")
    source = payload.get("descriptive", payload)
    updates: dict[str, str] = {}
    for fname in DESCRIPTIVE_FIELDS:
        if fname not in source:
            continue
        text = str(source[fname])
        if len(text) > MAX_DESCRIPTIVE_CHARS:
            raise ValueError(
                f"descriptive field {fname!r} exceeds {MAX_DESCRIPTIVE_CHARS} "
                "characters"
            )
        if contains_directive(text, denylist):
            raise ValueError(
                f"descriptive field {fname!r} contains an explicit directive"
            )
        updates[fname] = text
    if not updates:
        raise ValueError("rewrite response changed no descriptive fields")
    return updates


def rewrite_llm(
    persona: Persona,
    current: BehaviorLabel,
    target: BehaviorLabel,
    gateway,
    denylist: tuple[str, ...] = DIRECTIVE_DENYLIST,
) -> Persona:
    """LLM rewrite of descriptive fields toward the target behavior.

    Responses that alter identity, exceed the per-field character cap, or
    smuggle in explicit directives are rejected; after one reprompt the
    original persona is kept with a warning.
    """
    from .gateway import render_template

    bindings = {
        "name": persona.identity.name,
        "role": persona.identity.role,
        "age": str(persona.identity.age),
        "gender": persona.identity.gender,
        "pronouns": persona.identity.pronouns,
        **{f: persona.descriptive[f] for f in DESCRIPTIVE_FIELDS},
        "current_behavior": current.value,
        "target_behavior": target.value,
    }
    system, user = render_template("persona_writer", bindings)
    last_error = ""
    for attempt in range(2):
        prompt = user if attempt == 0 else (
            user + f"\n\nYour previous response was invalid: {last_error}. "
            "Reply again with a JSON object of descriptive field updates only."
        )
        payload = gateway.chat_json(system=system, user=prompt, temperature=1.0)
        try:
            updates = _validate_rewrite_payload(persona, payload, denylist)
        except ValueError as exc:
            last_error = str(exc)
            continue
        return persona.with_descriptive(updates)
    log.warning(
        "rewrite rejected twice for %s (%s); keeping original persona",
        persona.id,
        last_error,
    )
    return persona


@dataclass(frozen=True)
class EvolutionEntry:
    iteration: int
    agent_id: str
    current_label: str
    target_label: str
    before: dict
    after: dict

    def to_json_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "agent_id": self.agent_id,
            "current_label": self.current_label,
            "target_label": self.target_label,
            "before": self.before,
            "after": self.after,
        }


class PersonaWriter(Protocol):
    def rewrite(
        self, persona: Persona, current: BehaviorLabel, target: BehaviorLabel
    ) -> Persona: ...


@dataclass
class TraitWriter:
    """Deterministic writer: contracts traits toward the target archetype."""

    step: float = DEFAULT_TRAIT_STEP
    archetypes: Mapping[BehaviorLabel, Mapping[str, float]] | None = None

    def rewrite(
        self, persona: Persona, current: BehaviorLabel, target: BehaviorLabel
    ) -> Persona:
        return rewrite_trait(persona, target, self.step, self.archetypes)


@dataclass
class LlmWriter:
    """LLM-backed writer restricted to descriptive fields."""

    gateway: object
    denylist: tuple[str, ...] = DIRECTIVE_DENYLIST

    def rewrite(
        self, persona: Persona, current: BehaviorLabel, target: BehaviorLabel
    ) -> Persona:
        return rewrite_llm(persona, current, target, self.gateway, self.denylist)


@dataclass
class EvolutionLog:
    """Per-agent rewrite history, exportable as JSONL."""

    entries: list[EvolutionEntry] = field(default_factory=list)

    def record(
        self,
        iteration: int,
        before: Persona,
        after: Persona,
        current: BehaviorLabel,
        target: BehaviorLabel,
    ) -> None:
        self.entries.append(
            EvolutionEntry(
                iteration=iteration,
                agent_id=before.id,
                current_label=current.value,
                target_label=target.value,
                before=before.to_json_dict(),
                after=after.to_json_dict(),
            )
        )

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry.to_json_dict(), sort_keys=True) + "\n")
