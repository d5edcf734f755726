"""Persona records: identity, descriptive profile, and numeric trait vector."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

TRAIT_NAMES: tuple[str, ...] = (
    "risk_tolerance",
    "sociability",
    "assertiveness",
    "composure",
    "initiative",
)

DESCRIPTIVE_FIELDS: tuple[str, ...] = (
    "personality_traits",
    "emotional_disposition",
    "motivations_goals",
    "communication_style",
    "knowledge_scope",
    "backstory",
)

IDENTITY_FIELDS: tuple[str, ...] = ("name", "role", "age", "gender", "pronouns")

MAX_DESCRIPTIVE_CHARS = 500


@dataclass(frozen=True)
class Identity:
    """Immutable identity fields; never edited by any rewrite path."""

    name: str
    role: str
    age: int
    gender: str
    pronouns: str

    def __post_init__(self) -> None:
        for fname in ("name", "role", "gender", "pronouns"):
            if not getattr(self, fname):
                raise ValueError(f"identity field {fname!r} must be non-empty")
        if self.age <= 0:
            raise ValueError("age must be positive")


@dataclass(frozen=True)
class Persona:
    """One agent's persona: who they are, how they are described, and a
    five-dimensional numeric trait vector in [0, 1] used by the deterministic
    decision policy."""

    id: str
    identity: Identity
    descriptive: Mapping[str, str]
    traits: Mapping[str, float]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("persona id must be non-empty")
        missing = [f for f in DESCRIPTIVE_FIELDS if f not in self.descriptive]
        if missing:
            raise ValueError(f"missing descriptive fields: {missing}")
        for fname in DESCRIPTIVE_FIELDS:
            text = self.descriptive[fname]
            if len(text) > MAX_DESCRIPTIVE_CHARS:
                raise ValueError(
                    f"descriptive field {fname!r} exceeds "
                    f"{MAX_DESCRIPTIVE_CHARS} characters"
                )
        missing_traits = [t for t in TRAIT_NAMES if t not in self.traits]
        if missing_traits:
            raise ValueError(f"missing traits: {missing_traits}")
        for tname in TRAIT_NAMES:
            value = self.traits[tname]
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"trait {tname!r} out of [0, 1]: {value}")
        object.__setattr__(
            self, "descriptive", {f: str(self.descriptive[f]) for f in DESCRIPTIVE_FIELDS}
        )
        object.__setattr__(
            self, "traits", {t: float(self.traits[t]) for t in TRAIT_NAMES}
        )

    def trait_vector(self) -> tuple[float, ...]:
        return tuple(self.traits[t] for t in TRAIT_NAMES)

    def with_traits(self, traits: Mapping[str, float]) -> "Persona":
        return replace(self, traits=dict(traits))

    def with_descriptive(self, updates: Mapping[str, str]) -> "Persona":
        merged = dict(self.descriptive)
        merged.update({k: v for k, v in updates.items() if k in DESCRIPTIVE_FIELDS})
        return replace(self, descriptive=merged)

    def descriptive_text(self) -> str:
        """All descriptive fields concatenated, for text analysis."""
        return " ".join(self.descriptive[f] for f in DESCRIPTIVE_FIELDS)

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "identity": {
                "name": self.identity.name,
                "role": self.identity.role,
                "age": self.identity.age,
                "gender": self.identity.gender,
                "pronouns": self.identity.pronouns,
            },
            "descriptive": {f: self.descriptive[f] for f in DESCRIPTIVE_FIELDS},
            "traits": {t: self.traits[t] for t in TRAIT_NAMES},
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "Persona":
        ident = data["identity"]
        return cls(
            id=data["id"],
            identity=Identity(
                name=ident["name"],
                role=ident["role"],
                age=int(ident["age"]),
                gender=ident["gender"],
                pronouns=ident["pronouns"],
            ),
            descriptive=dict(data["descriptive"]),
            traits=dict(data["traits"]),
        )


def load_pool(path: str | Path) -> list[Persona]:
    """Load a persona pool document ({"personas": [...]})."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    personas = [Persona.from_json_dict(p) for p in doc["personas"]]
    seen: set[str] = set()
    for persona in personas:
        if persona.id in seen:
            raise ValueError(f"duplicate persona id: {persona.id}")
        seen.add(persona.id)
    return personas


def save_pool(personas: list[Persona], path: str | Path) -> None:
    payload = {"personas": [p.to_json_dict() for p in personas]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def bundled_pool_path() -> Path:
    """Path of the bundled 80-persona school pool."""
    return Path(__file__).parent / "data" / "personas_school.json"


def load_bundled_pool() -> list[Persona]:
    return load_pool(bundled_pool_path())
