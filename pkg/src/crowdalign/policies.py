"""Decision policies: the deterministic trait policy, the directive-following
explicit policy, and the LLM-backed policy.

The trait policy scores six intents as affine functions of the agent's trait
vector and observation features, then maps the winning intent onto a concrete
offered action id. The scoring table is data (``data/trait_policy.json``);
the copy in the repo is the normative constant set that tests pin.
"""

from __future__ import annotations

import json
import random
from functools import lru_cache
from pathlib import Path
from typing import Mapping

from .behaviors import BehaviorLabel
from .personas import TRAIT_NAMES, Persona
from .simulation import (
    FIGHT_ACTION,
    POST_INCIDENT,
    STAY_STILL_ACTION,
    ActionDecision,
    MovementState,
    Observation,
    Posture,
    VocalMode,
)

INTENTS = ("freeze", "hide", "flee", "follow", "approach", "fight")
PRE_INTENTS = ("stay", "wander", "approach")

FEATURE_NAMES = (
    "spot",
    "exit_here",
    "shooter_here",
    "shooter_known",
    "danger",
    "crossings",
    "movers",
    "rally",
    "hiding_now",
)

_UNAVAILABLE = float("-inf")


@lru_cache(maxsize=1)
def load_policy_table(path: str | None = None) -> dict:
    table_path = Path(path) if path else Path(__file__).parent / "data" / "trait_policy.json"
    with open(table_path, encoding="utf-8") as fh:
        return json.load(fh)


def observation_features(obs: Observation) -> dict[str, float]:
    """Numeric feature vector the scoring table consumes."""
    danger = obs.shooter_visible or (
        obs.last_known_hops is not None and obs.last_known_hops <= 1
    )
    return {
        "spot": 1.0 if obs.hiding_spots else 0.0,
        "exit_here": 1.0 if obs.exits else 0.0,
        "shooter_here": 1.0 if obs.shooter_visible else 0.0,
        "shooter_known": 1.0 if obs.shooter_last_known_region else 0.0,
        "danger": 1.0 if danger else 0.0,
        "crossings": min(obs.regions_crossed, 2) / 2.0,
        "movers": min(obs.same_region_movers, 3) / 3.0,
        "rally": 1.0 if obs.rally_target else 0.0,
        "hiding_now": 1.0 if obs.posture is Posture.HIDING else 0.0,
    }


def score_intent(
    intent: str,
    traits: Mapping[str, float],
    features: Mapping[str, float],
    table: dict | None = None,
) -> float:
    table = table or load_policy_table()
    row = table["post"][intent]
    total = row["bias"]
    for name in TRAIT_NAMES:
        total += row["traits"].get(name, 0.0) * traits[name]
    for name in FEATURE_NAMES:
        total += row["features"].get(name, 0.0) * features.get(name, 0.0)
    return total


def _score_pre_intent(
    intent: str, traits: Mapping[str, float], table: dict
) -> float:
    row = table["pre"][intent]
    total = row["bias"]
    for name in TRAIT_NAMES:
        total += row["traits"].get(name, 0.0) * traits[name]
    return total


def _nearest(points) -> str | None:
    best = None
    for point in points:
        key = (point.distance, point.id)
        if best is None or key < best:
            best = key
    return best[1] if best else None


def _intent_action(intent: str, obs: Observation) -> str | None:
    """Concrete offered action id for an intent, or None when unavailable."""
    if intent == "freeze":
        return STAY_STILL_ACTION
    if intent == "hide":
        return _nearest(obs.hiding_spots)
    if intent == "flee":
        return obs.flee_next_hop
    if intent == "follow":
        return obs.rally_next_hop or obs.flee_next_hop
    if intent == "approach":
        if obs.same_region_agents:
            return obs.same_region_agents[0][0]
        return None
    if intent == "fight":
        if obs.shooter_visible:
            return FIGHT_ACTION
        return obs.hunt_next_hop or obs.seek_next_hop
    raise ValueError(f"unknown intent: {intent!r}")


_MOVEMENT_BY_INTENT = {
    "freeze": MovementState.STAY_STILL,
    "hide": MovementState.SPRINT,
    "flee": MovementState.SPRINT,
    "follow": MovementState.SPRINT,
    "approach": MovementState.WALK,
    "fight": MovementState.SPRINT,
}

_MOOD_BY_INTENT = {
    "freeze": "petrified",
    "hide": "terrified",
    "flee": "panicked",
    "follow": "frantic",
    "approach": "worried",
    "fight": "resolute",
}

_THOUGHT_BY_INTENT = {
    "freeze": "I can't move. I just can't move.",
    "hide": "I need to get out of sight right now.",
    "flee": "Keep moving, get to the exit.",
    "follow": "Stay with the others, go where they go.",
    "approach": "I should get closer to someone.",
    "fight": "Enough. I'm going to stop him.",
}


def _flee_shout(obs: Observation, action_id: str, rng: random.Random) -> tuple[str, str | None]:
    target_region = action_id
    if obs.flee_exit_id and action_id == obs.flee_exit_id:
        target_region = obs.region
    phrases = (
        f"Run! Head for {target_region}!",
        f"Go, go! Through {target_region}!",
    )
    return phrases[rng.randrange(len(phrases))], target_region


def _decision_for_intent(
    intent: str, obs: Observation, action_id: str, rng: random.Random
) -> ActionDecision:
    utterance = ""
    vocal = VocalMode.SILENT
    rally = None
    if intent in ("flee", "follow"):
        utterance, rally = _flee_shout(obs, action_id, rng)
        vocal = VocalMode.OUT_LOUD
    elif intent == "hide":
        utterance = "Get down, stay quiet."
        vocal = VocalMode.WHISPER
    elif intent == "fight":
        utterance = "Hey! Over here!"
        vocal = VocalMode.OUT_LOUD
    mood = _MOOD_BY_INTENT[intent] if obs.phase == POST_INCIDENT else obs.mood
    return ActionDecision(
        thought=_THOUGHT_BY_INTENT[intent],
        vocal_mode=vocal,
        utterance=utterance,
        movement=_MOVEMENT_BY_INTENT[intent],
        action_id=action_id,
        mood_update=mood,
        memory_update=f"t={obs.time_s:g}: {intent} -> {action_id}",
        rally_region=rally,
    )


def _pre_incident_decision(
    obs: Observation, traits: Mapping[str, float], rng: random.Random, table: dict
) -> ActionDecision:
    candidates: list[tuple[float, str, str]] = []
    for intent in PRE_INTENTS:
        if intent == "stay":
            action = STAY_STILL_ACTION
        elif intent == "wander":
            regions = [r.id for r in obs.neighboring_regions]
            action = regions[rng.randrange(len(regions))] if regions else None
        else:
            action = (
                obs.same_region_agents[0][0] if obs.same_region_agents else None
            )
        if action is None:
            continue
        candidates.append((_score_pre_intent(intent, traits, table), action, intent))
    best_score = max(score for score, _, _ in candidates)
    winners = sorted(
        (c for c in candidates if c[0] >= best_score - 1e-12), key=lambda c: c[1]
    )
    _, action, intent = winners[0]
    utterance = ""
    vocal = VocalMode.SILENT
    if intent == "approach":
        utterance = f"Morning, {action}."
        vocal = VocalMode.OUT_LOUD
    return ActionDecision(
        thought="Just a normal day so far.",
        vocal_mode=vocal,
        utterance=utterance,
        movement=MovementState.WALK if intent != "stay" else MovementState.STAY_STILL,
        action_id=action,
        mood_update=obs.mood,
        memory_update="",
    )


def decide_trait_policy(
    obs: Observation, traits: Mapping[str, float], rng: random.Random
) -> ActionDecision:
    """Deterministic argmax over intent scores; ties break on action id."""
    if not obs.offered_actions:
        raise ValueError("no offered actions")
    table = load_policy_table()
    if obs.phase != POST_INCIDENT:
        return _pre_incident_decision(obs, traits, rng, table)
    features = observation_features(obs)
    offered = set(obs.offered_actions)
    candidates: list[tuple[float, str, str]] = []
    for intent in INTENTS:
        action = _intent_action(intent, obs)
        if action is None or action not in offered:
            continue
        candidates.append((score_intent(intent, traits, features, table), action, intent))
    if not candidates:
        return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
    best_score = max(score for score, _, _ in candidates)
    winners = [c for c in candidates if c[0] >= best_score - 1e-12]
    winners.sort(key=lambda c: c[1])
    _, action, intent = winners[0]
    return _decision_for_intent(intent, obs, action, rng)


def decide_explicit(
    obs: Observation,
    directive: BehaviorLabel | None,
    traits: Mapping[str, float] | None = None,
    rng: random.Random | None = None,
) -> ActionDecision:
    """Directive-following policy: maps the fixed target behavior directly to
    actions post-incident; pre-incident it behaves as the trait policy."""
    rng = rng or random.Random(0)
    if obs.phase != POST_INCIDENT or directive is None:
        if traits is not None:
            return decide_trait_policy(obs, traits, rng)
        return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
    offered = set(obs.offered_actions)

    def available(action: str | None) -> str | None:
        return action if action is not None and action in offered else None

    if directive is BehaviorLabel.FREEZE:
        return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
    if directive is BehaviorLabel.HIDE_IN_PLACE:
        spot = available(_nearest(obs.hiding_spots))
        if obs.posture is Posture.HIDING:
            return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
        if spot:
            return _decision_for_intent("hide", obs, spot, rng)
        return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
    if directive is BehaviorLabel.HIDE_AFTER_RUNNING:
        spot = available(_nearest(obs.hiding_spots))
        if obs.posture is Posture.HIDING:
            return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
        if obs.regions_crossed >= 1 and spot:
            return _decision_for_intent("hide", obs, spot, rng)
        flee = available(obs.flee_next_hop)
        if flee:
            return _decision_for_intent("flee", obs, flee, rng)
        return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
    if directive is BehaviorLabel.RUN_INDEPENDENTLY:
        flee = available(obs.flee_next_hop)
        if flee:
            decision = _decision_for_intent("flee", obs, flee, rng)
            # Independent runners do not rally others around their route.
            return ActionDecision(
                thought=decision.thought,
                vocal_mode=VocalMode.SILENT,
                utterance="",
                movement=decision.movement,
                action_id=decision.action_id,
                mood_update=decision.mood_update,
                memory_update=decision.memory_update,
            )
        return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
    if directive is BehaviorLabel.RUN_FOLLOWING_CROWD:
        action = available(obs.rally_next_hop) or available(obs.flee_next_hop)
        if action:
            return _decision_for_intent("follow", obs, action, rng)
        return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
    if directive is BehaviorLabel.FIGHT:
        if obs.shooter_visible:
            return _decision_for_intent("fight", obs, FIGHT_ACTION, rng)
        action = available(obs.hunt_next_hop) or available(obs.seek_next_hop)
        if action:
            return _decision_for_intent("fight", obs, action, rng)
        return _decision_for_intent("freeze", obs, STAY_STILL_ACTION, rng)
    raise ValueError(f"unknown directive: {directive!r}")


def quota_directives(
    personas: list[Persona],
    quotas: Mapping[BehaviorLabel, int],
    spawns: Mapping[str, str],
) -> dict[str, BehaviorLabel]:
    """Assign per-agent directives matching the quota counts.

    Agents are ordered by (spawn region, id) and directives are handed out in
    contiguous blocks, which keeps crowd-following agents co-located while
    spreading independent runners across rooms.
    """
    if sum(quotas.values()) != len(personas):
        raise ValueError("quota total must equal population size")
    ordered = sorted(personas, key=lambda p: (spawns[p.id], p.id))
    n = len(ordered)
    directives: dict[str, BehaviorLabel] = {}
    # Independent runners are spread evenly so they flee alone...
    ri_count = quotas.get(BehaviorLabel.RUN_INDEPENDENTLY, 0)
    if ri_count:
        for i in range(ri_count):
            pos = (i * n) // ri_count
            while ordered[pos].id in directives:
                pos = (pos + 1) % n
            directives[ordered[pos].id] = BehaviorLabel.RUN_INDEPENDENTLY
    # ...while the other behaviors fill contiguous room-ordered blocks.
    block_order = (
        BehaviorLabel.RUN_FOLLOWING_CROWD,
        BehaviorLabel.HIDE_IN_PLACE,
        BehaviorLabel.HIDE_AFTER_RUNNING,
        BehaviorLabel.FREEZE,
        BehaviorLabel.FIGHT,
    )
    remaining = [p for p in ordered if p.id not in directives]
    idx = 0
    for label in block_order:
        for _ in range(quotas.get(label, 0)):
            directives[remaining[idx].id] = label
            idx += 1
    if len(directives) != n:
        raise AssertionError("directive assignment incomplete")
    return directives


def decide_llm(obs: Observation, persona: Persona, gateway) -> ActionDecision:
    """One structured decision call; invalid action ids get one reprompt and
    then fall back to staying put (flagged in the trajectory)."""
    from .gateway import render_template

    bindings = {
        "name": persona.identity.name,
        "role": persona.identity.role,
        "age": str(persona.identity.age),
        "gender": persona.identity.gender,
        "pronouns": persona.identity.pronouns,
        **{field: persona.descriptive[field] for field in persona.descriptive},
        "observation": obs.to_text(),
        "offered_actions": ", ".join(obs.offered_actions),
    }
    system, user = render_template("agent_decision", bindings)
    offered = set(obs.offered_actions)
    last_error = ""
    for attempt in range(2):
        prompt = user if attempt == 0 else (
            user + f"\n\nYour previous response was invalid: {last_error}. "
            "Reply again with valid JSON and a listed action_id."
        )
        response = gateway.chat_json(
            system=system, user=prompt, temperature=1.0
        )
        try:
            decision = _parse_llm_decision(response, offered)
        except ValueError as exc:
            last_error = str(exc)
            continue
        return decision
    return ActionDecision(
        thought=f"[fallback after invalid responses: {last_error}]",
        vocal_mode=VocalMode.SILENT,
        utterance="",
        movement=MovementState.STAY_STILL,
        action_id=STAY_STILL_ACTION,
        mood_update=obs.mood,
        memory_update="",
        fallback=True,
    )


def _parse_llm_decision(payload: dict, offered: set[str]) -> ActionDecision:
    try:
        action = payload["action"]
        update = payload["update"]
        thought = str(payload["thought"])
        vocal_mode = VocalMode(action["vocal_mode"])
        utterance = str(action.get("utterance", ""))
        movement = MovementState(action["movement"])
        action_id = str(action["action_id"])
        mood = str(update["mood"])
        memory = str(update["memory"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed decision payload: {exc}") from None
    if action_id not in offered:
        raise ValueError(f"action_id {action_id!r} not in offered set")
    if vocal_mode is VocalMode.SILENT:
        utterance = ""
    return ActionDecision(
        thought=thought,
        vocal_mode=vocal_mode,
        utterance=utterance,
        movement=movement,
        action_id=action_id,
        mood_update=mood,
        memory_update=memory,
    )
