"""Civilian agent loop: observations, decisions, world stepping, trajectories.

The world advances on a fixed tick (default 0.5 s). Agents re-decide on
events, not ticks: reaching a navigation target, a 5 s pursuit timeout, a
5 s cooldown after deciding to stay still, the first gunshot, or the shooter
entering their region. Trait and explicit modes are fully deterministic for
a given (layout, personas, seed, config).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .layout import Layout, Point, distance
from .personas import Persona
from .shooter import DAMAGE_PER_HIT, ShooterState, Shot, shooter_step, spawn_shooter

_EPS = 1e-9

FULL_HEALTH = 100
NEARBY_RADIUS_M = 3.0
HEARING_RADIUS_M = 5.0
HEARING_WINDOW_S = 3.0
CO_MOVER_RADIUS_M = 5.0
DECISION_COOLDOWN_S = 5.0
PURSUIT_TIMEOUT_S = 5.0
MEMORY_CAP = 10
GUNSHOT_ALERT = "I hear a loud gunshot."

PRE_INCIDENT = "pre_incident"
POST_INCIDENT = "post_incident"


class MovementState(Enum):
    STAY_STILL = "stay_still"
    WALK = "walk"
    SPRINT = "sprint"


MOVEMENT_SPEED = {
    MovementState.STAY_STILL: 0.0,
    MovementState.WALK: 2.5,
    MovementState.SPRINT: 5.0,
}


class Posture(Enum):
    STANDING = "standing"
    CROUCHING = "crouching"
    HIDING = "hiding"


class VocalMode(Enum):
    OUT_LOUD = "out_loud"
    WHISPER = "whisper"
    SILENT = "silent"


TERMINAL_EXITED = "exited"
TERMINAL_HIDING = "hiding"
TERMINAL_INCAPACITATED = "incapacitated"
TERMINAL_TIMEOUT = "timeout"

STAY_STILL_ACTION = "stay_still"
FIGHT_ACTION = "fight_the_shooter"

TRIGGER_START = "start"
TRIGGER_ARRIVAL = "arrival"
TRIGGER_TIMEOUT = "timeout"
TRIGGER_COOLDOWN = "cooldown"
TRIGGER_INCIDENT = "incident_start"
TRIGGER_SHOOTER_CONTACT = "shooter_contact"

# Forced triggers may violate the >= 5 s cadence floor by design.
FORCED_TRIGGERS = (TRIGGER_INCIDENT, TRIGGER_SHOOTER_CONTACT)


@dataclass(frozen=True)
class ActionDecision:
    thought: str
    vocal_mode: VocalMode
    utterance: str
    movement: MovementState
    action_id: str
    mood_update: str
    memory_update: str
    rally_region: str | None = None
    fallback: bool = False

    def __post_init__(self) -> None:
        if self.vocal_mode is VocalMode.SILENT and self.utterance:
            raise ValueError("silent vocal mode implies empty utterance")


@dataclass(frozen=True)
class NearbyAgent:
    id: str
    health_status: str
    distance: float


@dataclass(frozen=True)
class NeighborRegion:
    id: str
    distance: float
    note: str
    exit_hops: int
    degree: int


@dataclass(frozen=True)
class PointInfo:
    id: str
    descriptor: str
    distance: float


@dataclass(frozen=True)
class HeardUtterance:
    speaker: str
    text: str
    age_s: float


@dataclass(frozen=True)
class Observation:
    """What one agent can currently perceive, plus resolved navigation hints.

    Hints (flee/rally/hunt/seek next hops) are derived from static layout
    knowledge plus observed or remembered dynamic state only; they never leak
    unobserved shooter or agent positions.
    """

    phase: str
    time_s: float
    agent_id: str
    region: str
    movement: MovementState
    mood: str
    health: int
    posture: Posture
    nearby_agents: tuple[NearbyAgent, ...]
    neighboring_regions: tuple[NeighborRegion, ...]
    recent_utterances: tuple[HeardUtterance, ...]
    memory: tuple[str, ...]
    offered_actions: tuple[str, ...]
    same_region_agents: tuple[tuple[str, float], ...] = ()
    alerts: tuple[str, ...] = ()
    shooter_visible: bool = False
    shooter_distance: float | None = None
    shooter_last_known_region: str | None = None
    last_known_hops: int | None = None
    hiding_spots: tuple[PointInfo, ...] = ()
    exits: tuple[PointInfo, ...] = ()
    regions_crossed: int = 0
    same_region_movers: int = 0
    rally_target: str | None = None
    flee_next_hop: str | None = None
    flee_exit_id: str | None = None
    flee_alt_next_hop: str | None = None
    flee_alt_exit_id: str | None = None
    rally_next_hop: str | None = None
    hunt_next_hop: str | None = None
    seek_next_hop: str | None = None

    def to_text(self) -> str:
        """Render the observation as prompt text."""
        lines = [f"Phase: {self.phase.replace('_', ' ')}"]
        for alert in self.alerts:
            lines.append(f"Alert: {alert}")
        lines.append(
            f"You are in {self.region}, {self.movement.value}, mood {self.mood}, "
            f"health {self.health}, posture {self.posture.value}."
        )
        if self.nearby_agents:
            people = ", ".join(
                f"{a.id} ({a.health_status}, {a.distance:.1f} m)"
                for a in self.nearby_agents
            )
            lines.append(f"People nearby: {people}")
        if self.neighboring_regions:
            rooms = ", ".join(
                f"{r.id} ({r.distance:.1f} m, {r.note})"
                for r in self.neighboring_regions
            )
            lines.append(f"Neighboring regions: {rooms}")
        if self.recent_utterances:
            talk = "; ".join(f"{u.speaker}: {u.text!r}" for u in self.recent_utterances)
            lines.append(f"Recent voices: {talk}")
        if self.phase == POST_INCIDENT:
            if self.shooter_visible and self.shooter_distance is not None:
                lines.append(
                    f"The shooter is here, {self.shooter_distance:.1f} m away."
                )
            elif self.shooter_last_known_region:
                lines.append(
                    f"Shooter last known near {self.shooter_last_known_region}."
                )
            if self.hiding_spots:
                spots = ", ".join(
                    f"{s.id} ({s.descriptor}, {s.distance:.1f} m)"
                    for s in self.hiding_spots
                )
                lines.append(f"Hiding spots here: {spots}")
            if self.exits:
                exits = ", ".join(
                    f"{e.id} ({e.descriptor}, {e.distance:.1f} m)" for e in self.exits
                )
                lines.append(f"Exits here: {exits}")
        if self.memory:
            lines.append("Memory: " + " | ".join(self.memory))
        return "\n".join(lines)


@dataclass(frozen=True)
class TrajectoryRecord:
    """One decision event in an agent's trajectory."""

    time_s: float
    agent_id: str
    region: str
    position: Point
    mood: str
    health: int
    posture: str
    movement: str
    phase: str
    shooter_visible: bool
    shooter_distance: float | None
    shooter_last_known_region: str | None
    thought: str
    vocal_mode: str
    utterance: str
    action_id: str
    trigger: str
    co_movers: int
    regions_crossed: int
    memory_update: str
    fallback: bool = False

    def to_json_dict(self) -> dict:
        return {
            "time_s": self.time_s,
            "agent_id": self.agent_id,
            "location": self.region,
            "position": [self.position[0], self.position[1]],
            "mood": self.mood,
            "health": self.health,
            "posture": self.posture,
            "movement": self.movement,
            "phase": self.phase,
            "shooter_visible": self.shooter_visible,
            "shooter_distance": self.shooter_distance,
            "shooter_region": self.shooter_last_known_region,
            "thought": self.thought,
            "vocal_mode": self.vocal_mode,
            "utterance": self.utterance,
            "action_id": self.action_id,
            "trigger": self.trigger,
            "co_movers": self.co_movers,
            "regions_crossed": self.regions_crossed,
            "memory_update": self.memory_update,
            "fallback": self.fallback,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrajectoryRecord":
        return cls(
            time_s=float(data["time_s"]),
            agent_id=data["agent_id"],
            region=data["location"],
            position=(float(data["position"][0]), float(data["position"][1])),
            mood=data["mood"],
            health=int(data["health"]),
            posture=data["posture"],
            movement=data["movement"],
            phase=data["phase"],
            shooter_visible=bool(data["shooter_visible"]),
            shooter_distance=data.get("shooter_distance"),
            shooter_last_known_region=data.get("shooter_region"),
            thought=data.get("thought", ""),
            vocal_mode=data.get("vocal_mode", "silent"),
            utterance=data.get("utterance", ""),
            action_id=data["action_id"],
            trigger=data.get("trigger", ""),
            co_movers=int(data.get("co_movers", 0)),
            regions_crossed=int(data.get("regions_crossed", 0)),
            memory_update=data.get("memory_update", ""),
            fallback=bool(data.get("fallback", False)),
        )


@dataclass
class Trajectory:
    agent_id: str
    persona: Persona
    records: list[TrajectoryRecord]
    terminal_status: str

    def post_incident_records(self) -> list[TrajectoryRecord]:
        return [r for r in self.records if r.phase == POST_INCIDENT]


@dataclass(frozen=True)
class NavTarget:
    kind: str  # "region" | "spot" | "exit" | "agent"
    id: str
    pos: Point
    region: str


@dataclass
class AgentState:
    id: str
    persona: Persona
    position: Point
    current_region: str
    movement: MovementState = MovementState.STAY_STILL
    mood: str = "calm"
    health: int = FULL_HEALTH
    posture: Posture = Posture.STANDING
    memory: list[str] = field(default_factory=list)
    current_target: NavTarget | None = None
    alive: bool = True
    exited: bool = False
    waypoints: list[tuple[Point, str]] = field(default_factory=list)
    last_decision_time: float = 0.0
    stationary_decision: bool = True
    regions_crossed_post: int = 0
    shooter_last_known: str | None = None
    rally_target: str | None = None
    rally_time: float = -1.0
    flight_exit_id: str | None = None
    heard_keys: set = field(default_factory=set)
    arrived: bool = False
    interrupted_contact: bool = False
    alerted: bool = False
    fought: bool = False

    @property
    def speed(self) -> float:
        return MOVEMENT_SPEED[self.movement]

    def remember(self, entry: str) -> None:
        self.memory.append(entry)
        if len(self.memory) > MEMORY_CAP:
            del self.memory[: len(self.memory) - MEMORY_CAP]


@dataclass(frozen=True)
class Utterance:
    time_s: float
    speaker: str
    region: str
    pos: Point
    text: str
    rally_region: str | None = None


@dataclass(frozen=True)
class EpisodeConfig:
    dt: float = 0.5
    shooter_entry_time_s: float | None = None  # None: use the layout's value
    horizon_s: float = 120.0
    in_flight_limit: int = 8
    collect_tick_trace: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon_s <= 0:
            raise ValueError("horizon_s must be positive")
        if self.shooter_entry_time_s is not None and self.shooter_entry_time_s < 0:
            raise ValueError("shooter_entry_time_s must be >= 0")
        if self.in_flight_limit < 1:
            raise ValueError("in_flight_limit must be >= 1")


@dataclass
class WorldState:
    layout: Layout
    agents: dict[str, AgentState]
    config: EpisodeConfig
    time_s: float = 0.0
    phase: str = PRE_INCIDENT
    shooter: ShooterState | None = None
    utterances: list[Utterance] = field(default_factory=list)
    shots: list[Shot] = field(default_factory=list)

    def civilians_in_region(self, region_id: str) -> list[str]:
        return [
            a.id
            for a in self.agents.values()
            if a.alive and not a.exited and a.current_region == region_id
        ]

    def agent_ids(self) -> list[str]:
        return sorted(self.agents)


@dataclass
class EpisodeSummary:
    seed: int
    policy_mode: str
    terminal_statuses: dict[str, str]
    shooter_shots_fired: int
    shooter_reloads_completed: int
    shooter_magazine: int
    shooter_trace: list[tuple[float, str]]
    personas: dict[str, dict]

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "policy_mode": self.policy_mode,
            "terminal_statuses": dict(sorted(self.terminal_statuses.items())),
            "shooter": {
                "shots_fired": self.shooter_shots_fired,
                "reloads_completed": self.shooter_reloads_completed,
                "magazine": self.shooter_magazine,
            },
            "shooter_trace": [[t, r] for t, r in self.shooter_trace],
            "personas": {k: self.personas[k] for k in sorted(self.personas)},
        }


@dataclass
class EpisodeResult:
    trajectories: list[Trajectory]
    summary: EpisodeSummary
    tick_trace: list[dict] | None = None


# ---------------------------------------------------------------------------
# observation + action offering


def offered_actions(agent: AgentState, world: WorldState) -> list[str]:
    """Action identifiers currently available to the agent."""
    if not agent.alive or agent.exited:
        return []
    actions = [STAY_STILL_ACTION]
    actions.extend(sorted(world.layout.neighbors(agent.current_region)))
    others = sorted(
        a.id
        for a in world.agents.values()
        if a.id != agent.id
        and a.alive
        and not a.exited
        and a.current_region == agent.current_region
    )
    actions.extend(others)
    if world.phase == POST_INCIDENT:
        region = world.layout.regions[agent.current_region]
        actions.extend(sorted(s.id for s in region.hiding_spots))
        actions.extend(sorted(e.id for e in region.exits))
        if (
            world.shooter is not None
            and world.shooter.current_region == agent.current_region
        ):
            actions.append(FIGHT_ACTION)
    return actions


def _health_status(health: int) -> str:
    if health >= FULL_HEALTH:
        return "healthy"
    if health > 0:
        return "injured"
    return "down"


def _nearest_exit_plan(
    layout: Layout, region: str, pos: Point
) -> tuple[str, str, str] | None:
    """(exit_id, exit_region, next_hop_action) for the closest reachable exit."""
    best_key: tuple[int, float, str] | None = None
    best: tuple[str, str, str] | None = None
    for exit_region, exit_point in layout.all_exits():
        hops = len(layout.region_path(region, exit_region)) - 1
        if exit_region == region:
            dist = distance(pos, exit_point.pos)
            hop_action = exit_point.id
        else:
            nxt = layout.next_region_toward(region, exit_region)
            dist = distance(pos, layout.door_position(region, nxt))
            hop_action = nxt
        key = (hops, dist, exit_point.id)
        if best_key is None or key < best_key:
            best_key = key
            best = (exit_point.id, exit_region, hop_action)
    return best


def _agent_next_region(agent: AgentState) -> str | None:
    for _, region in agent.waypoints:
        if region != agent.current_region:
            return region
    if agent.current_target and agent.current_target.region != agent.current_region:
        return agent.current_target.region
    return None


def build_observation(
    agent: AgentState, world: WorldState, phase: str | None = None
) -> Observation:
    """Assemble the agent's partial view of the world."""
    if not agent.alive:
        raise ValueError("cannot observe for a non-alive agent")
    phase = phase or world.phase
    layout = world.layout
    nearby = []
    same_region: list[tuple[str, float]] = []
    movers_targets: list[str] = []
    for other in (world.agents[i] for i in world.agent_ids()):
        if other.id == agent.id or not other.alive or other.exited:
            continue
        gap = distance(agent.position, other.position)
        if gap <= NEARBY_RADIUS_M:
            nearby.append(NearbyAgent(other.id, _health_status(other.health), gap))
        if other.current_region == agent.current_region:
            same_region.append((other.id, gap))
            if other.movement is not MovementState.STAY_STILL:
                target_region = _agent_next_region(other)
                if target_region:
                    movers_targets.append(target_region)
    nearby.sort(key=lambda a: (a.distance, a.id))
    same_region.sort(key=lambda item: (item[1], item[0]))

    neighbor_regions = []
    for rid in sorted(layout.neighbors(agent.current_region)):
        door = layout.door_position(agent.current_region, rid)
        hops = layout.exit_hops(rid)
        kind = layout.regions[rid].kind
        note = f"{kind}, {hops} region(s) from an exit"
        neighbor_regions.append(
            NeighborRegion(
                id=rid,
                distance=distance(agent.position, door),
                note=note,
                exit_hops=hops,
                degree=layout.degree(rid),
            )
        )

    heard = tuple(
        HeardUtterance(u.speaker, u.text, world.time_s - u.time_s)
        for u in world.utterances
        if u.speaker != agent.id
        and world.time_s - u.time_s <= HEARING_WINDOW_S + _EPS
        and distance(agent.position, u.pos) <= HEARING_RADIUS_M + _EPS
    )

    alerts: tuple[str, ...] = ()
    if phase == POST_INCIDENT and not agent.alerted:
        alerts = (GUNSHOT_ALERT,)

    kwargs: dict = {}
    if phase == POST_INCIDENT:
        region = layout.regions[agent.current_region]
        shooter = world.shooter
        visible = (
            shooter is not None and shooter.current_region == agent.current_region
        )
        kwargs["shooter_visible"] = visible
        kwargs["shooter_distance"] = (
            distance(agent.position, shooter.position) if visible else None
        )
        last_known = agent.shooter_last_known
        kwargs["shooter_last_known_region"] = last_known
        if last_known is not None:
            kwargs["last_known_hops"] = (
                len(layout.region_path(agent.current_region, last_known)) - 1
            )
        kwargs["hiding_spots"] = tuple(
            PointInfo(s.id, s.descriptor, distance(agent.position, s.pos))
            for s in sorted(region.hiding_spots, key=lambda s: s.id)
        )
        kwargs["exits"] = tuple(
            PointInfo(e.id, e.descriptor, distance(agent.position, e.pos))
            for e in sorted(region.exits, key=lambda e: e.id)
        )
        kwargs["regions_crossed"] = agent.regions_crossed_post
        kwargs["same_region_movers"] = len(movers_targets)
        modal_target = None
        if movers_targets:
            counts: dict[str, int] = {}
            for target in movers_targets:
                counts[target] = counts.get(target, 0) + 1
            modal_target = min(counts, key=lambda r: (-counts[r], r))
        rally = modal_target or agent.rally_target
        kwargs["rally_target"] = rally

        plan = _nearest_exit_plan(layout, agent.current_region, agent.position)
        if plan:
            exit_id, _exit_region, hop_action = plan
            kwargs["flee_next_hop"] = hop_action
            kwargs["flee_exit_id"] = exit_id
        if rally:
            if rally == agent.current_region:
                kwargs["rally_next_hop"] = (
                    kwargs.get("flee_next_hop")
                    if region.exits
                    else None
                )
            else:
                kwargs["rally_next_hop"] = layout.next_region_toward(
                    agent.current_region, rally
                )
        if visible:
            kwargs["hunt_next_hop"] = FIGHT_ACTION
        elif last_known is not None and last_known != agent.current_region:
            kwargs["hunt_next_hop"] = layout.next_region_toward(
                agent.current_region, last_known
            )
        neighbors = sorted(layout.neighbors(agent.current_region))
        if neighbors:
            kwargs["seek_next_hop"] = max(
                neighbors, key=lambda r: (layout.degree(r), r)
            )

    return Observation(
        phase=phase,
        time_s=world.time_s,
        agent_id=agent.id,
        region=agent.current_region,
        movement=agent.movement,
        mood=agent.mood,
        health=agent.health,
        posture=agent.posture,
        nearby_agents=tuple(nearby),
        neighboring_regions=tuple(neighbor_regions),
        recent_utterances=heard,
        memory=tuple(agent.memory),
        offered_actions=tuple(offered_actions(agent, world)),
        same_region_agents=tuple(same_region),
        alerts=alerts,
        **kwargs,
    )


# ---------------------------------------------------------------------------
# decision application + movement


def _resolve_target(
    agent: AgentState, world: WorldState, action_id: str, rng: random.Random
) -> NavTarget | None:
    layout = world.layout
    if action_id in (STAY_STILL_ACTION, FIGHT_ACTION):
        return None
    if action_id in layout.regions:
        rect = layout.regions[action_id].rect
        pos = (
            rect[0] + 0.5 + rng.random() * max(rect[2] - 1.0, 0.1),
            rect[1] + 0.5 + rng.random() * max(rect[3] - 1.0, 0.1),
        )
        return NavTarget("region", action_id, pos, action_id)
    region = layout.regions[agent.current_region]
    for spot in region.hiding_spots:
        if spot.id == action_id:
            return NavTarget("spot", spot.id, spot.pos, agent.current_region)
    for ex in region.exits:
        if ex.id == action_id:
            return NavTarget("exit", ex.id, ex.pos, agent.current_region)
    other = world.agents.get(action_id)
    if other is not None:
        return NavTarget("agent", other.id, other.position, other.current_region)
    raise ValueError(f"cannot resolve action id {action_id!r}")


def _count_co_movers(agent: AgentState, world: WorldState) -> int:
    if agent.flight_exit_id is None:
        return 0
    count = 0
    for other in world.agents.values():
        if other.id == agent.id or not other.alive or other.exited:
            continue
        if other.movement is MovementState.STAY_STILL:
            continue
        if other.flight_exit_id != agent.flight_exit_id:
            continue
        if distance(agent.position, other.position) <= CO_MOVER_RADIUS_M:
            count += 1
    return count


def _apply_decision(
    agent: AgentState,
    world: WorldState,
    obs: Observation,
    decision: ActionDecision,
    trigger: str,
    rng: random.Random,
) -> TrajectoryRecord:
    offered = set(obs.offered_actions)
    if decision.action_id not in offered:
        raise ValueError(
            f"action {decision.action_id!r} not offered to {agent.id}"
        )
    agent.mood = decision.mood_update or agent.mood
    if decision.memory_update:
        agent.remember(decision.memory_update)
    if obs.alerts:
        agent.alerted = True
        for alert in obs.alerts:
            agent.remember(alert)

    target = _resolve_target(agent, world, decision.action_id, rng)
    agent.current_target = target
    agent.arrived = False
    agent.last_decision_time = world.time_s
    agent.fought = agent.fought or decision.action_id == FIGHT_ACTION

    if target is None:
        agent.movement = MovementState.STAY_STILL
        agent.waypoints = []
        agent.stationary_decision = True
        if agent.posture is not Posture.HIDING:
            agent.posture = Posture.STANDING
        agent.flight_exit_id = None
    else:
        already_there = distance(agent.position, target.pos) <= _EPS
        if already_there:
            agent.movement = MovementState.STAY_STILL
            agent.waypoints = []
            agent.stationary_decision = True
            if target.kind == "spot":
                agent.posture = Posture.HIDING
        else:
            agent.movement = (
                decision.movement
                if decision.movement is not MovementState.STAY_STILL
                else MovementState.WALK
            )
            agent.posture = Posture.STANDING
            agent.waypoints = world.layout.waypoints(
                agent.position, agent.current_region, target.region, target.pos
            )
            agent.stationary_decision = False
        # Flight goal for co-movement measurement.
        if target.kind == "exit":
            agent.flight_exit_id = target.id
        elif target.kind == "region" and world.phase == POST_INCIDENT:
            agent.flight_exit_id = obs.flee_exit_id
        else:
            agent.flight_exit_id = None

    if decision.utterance and decision.vocal_mode is not VocalMode.SILENT:
        world.utterances.append(
            Utterance(
                time_s=world.time_s,
                speaker=agent.id,
                region=agent.current_region,
                pos=agent.position,
                text=decision.utterance,
                rally_region=decision.rally_region,
            )
        )

    return TrajectoryRecord(
        time_s=world.time_s,
        agent_id=agent.id,
        region=agent.current_region,
        position=agent.position,
        mood=agent.mood,
        health=agent.health,
        posture=agent.posture.value,
        movement=agent.movement.value,
        phase=obs.phase,
        shooter_visible=obs.shooter_visible,
        shooter_distance=obs.shooter_distance,
        shooter_last_known_region=obs.shooter_last_known_region,
        thought=decision.thought,
        vocal_mode=decision.vocal_mode.value,
        utterance=decision.utterance,
        action_id=decision.action_id,
        trigger=trigger,
        co_movers=_count_co_movers(agent, world),
        regions_crossed=agent.regions_crossed_post,
        memory_update=decision.memory_update,
        fallback=decision.fallback,
    )


def _move_agent(agent: AgentState, world: WorldState, dt: float) -> None:
    """Advance the agent along its waypoint chain; flag arrival."""
    if agent.movement is MovementState.STAY_STILL or not agent.waypoints:
        return
    budget = agent.speed * dt
    while budget > _EPS and agent.waypoints:
        target_pos, region = agent.waypoints[0]
        gap = distance(agent.position, target_pos)
        if gap <= budget + _EPS:
            agent.position = target_pos
            if region != agent.current_region:
                agent.current_region = region
                if world.phase == POST_INCIDENT:
                    agent.regions_crossed_post += 1
                agent.interrupted_contact = False
            agent.waypoints.pop(0)
            budget -= gap
        else:
            frac = budget / gap
            agent.position = (
                agent.position[0] + (target_pos[0] - agent.position[0]) * frac,
                agent.position[1] + (target_pos[1] - agent.position[1]) * frac,
            )
            budget = 0.0
    if not agent.waypoints:
        agent.arrived = True
        agent.movement = MovementState.STAY_STILL
        target = agent.current_target
        if target is not None:
            if target.kind == "spot":
                agent.posture = Posture.HIDING
            elif target.kind == "exit":
                agent.exited = True
        agent.current_target = None


def _broadcast_shot(world: WorldState, shot: Shot) -> None:
    # Gunfire is audible building-wide; everyone updates the last known region.
    for agent in world.agents.values():
        if agent.alive and not agent.exited:
            agent.shooter_last_known = shot.region


def _apply_shot(world: WorldState, shot: Shot) -> None:
    world.shots.append(shot)
    _broadcast_shot(world, shot)
    if not shot.hit:
        return
    target = world.agents[shot.target_id]
    target.health = max(0, target.health - DAMAGE_PER_HIT)
    if target.health == 0 and target.alive:
        target.alive = False
        target.movement = MovementState.STAY_STILL
        target.waypoints = []
        target.current_target = None


def _hearing_pass(world: WorldState) -> None:
    recent = [
        u
        for u in world.utterances
        if world.time_s - u.time_s <= HEARING_WINDOW_S + _EPS
    ]
    for agent in world.agents.values():
        if not agent.alive or agent.exited:
            continue
        for utter in recent:
            if utter.speaker == agent.id:
                continue
            key = (utter.speaker, utter.time_s)
            if key in agent.heard_keys:
                continue
            if distance(agent.position, utter.pos) <= HEARING_RADIUS_M + _EPS:
                agent.heard_keys.add(key)
                agent.remember(f"Heard {utter.speaker}: {utter.text}")
                if utter.rally_region and utter.time_s >= agent.rally_time:
                    agent.rally_target = utter.rally_region
                    agent.rally_time = utter.time_s


# ---------------------------------------------------------------------------
# episode loop


def _decide(
    agent: AgentState,
    world: WorldState,
    obs: Observation,
    policy_mode: str,
    rng: random.Random,
    directives: dict[str, object] | None,
    gateway,
) -> ActionDecision:
    from . import policies

    if policy_mode == "trait":
        return policies.decide_trait_policy(obs, agent.persona.traits, rng)
    if policy_mode == "explicit":
        directive = (directives or {}).get(agent.id)
        return policies.decide_explicit(
            obs, directive, traits=agent.persona.traits, rng=rng
        )
    if policy_mode == "llm":
        return policies.decide_llm(obs, agent.persona, gateway)
    raise ValueError(f"unknown policy mode: {policy_mode!r}")


def _due_trigger(
    agent: AgentState, world: WorldState, incident_event: bool
) -> str | None:
    if incident_event:
        return TRIGGER_INCIDENT
    shooter = world.shooter
    if shooter is not None and shooter.current_region != agent.current_region:
        agent.interrupted_contact = False
    if (
        shooter is not None
        and shooter.current_region == agent.current_region
        and not agent.interrupted_contact
    ):
        return TRIGGER_SHOOTER_CONTACT
    if agent.arrived:
        return TRIGGER_ARRIVAL
    elapsed = world.time_s - agent.last_decision_time
    if not agent.stationary_decision and elapsed >= PURSUIT_TIMEOUT_S - _EPS:
        return TRIGGER_TIMEOUT
    if agent.stationary_decision and elapsed >= DECISION_COOLDOWN_S - _EPS:
        return TRIGGER_COOLDOWN
    return None


def _run_decisions(
    due: list[tuple[AgentState, str]],
    world: WorldState,
    policy_mode: str,
    rng: random.Random,
    directives: dict[str, object] | None,
    gateway,
    records: dict[str, list[TrajectoryRecord]],
) -> None:
    if policy_mode == "llm" and len(due) > 1:
        # Issue concurrent requests, then apply strictly in agent-id order so
        # concurrency never changes simulation results.
        from concurrent.futures import ThreadPoolExecutor

        observations = {
            agent.id: build_observation(agent, world) for agent, _ in due
        }
        limit = world.config.in_flight_limit
        with ThreadPoolExecutor(max_workers=limit) as pool:
            futures = {
                agent.id: pool.submit(
                    _decide, agent, world, observations[agent.id], policy_mode,
                    rng, directives, gateway,
                )
                for agent, _ in due
            }
        for agent, trigger in due:
            decision = futures[agent.id].result()
            record = _apply_decision(
                agent, world, observations[agent.id], decision, trigger, rng
            )
            records[agent.id].append(record)
        return
    for agent, trigger in due:
        obs = build_observation(agent, world)
        decision = _decide(agent, world, obs, policy_mode, rng, directives, gateway)
        record = _apply_decision(agent, world, obs, decision, trigger, rng)
        records[agent.id].append(record)


def assign_spawns(
    layout: Layout, personas: list[Persona], seed: int
) -> dict[str, str]:
    """Deterministic spawn region per persona: round-robin over the non-route,
    non-yard rooms so initial co-location is spread."""
    rng = random.Random(seed * 7919 + 13)
    route = set(layout.patrol_route)
    candidates = [
        rid
        for rid in layout.region_ids()
        if rid not in route
        and layout.regions[rid].kind not in ("yard", "corridor", "entrance")
    ]
    if not candidates:
        candidates = layout.region_ids()
    rooms = list(candidates)
    rng.shuffle(rooms)
    return {
        persona.id: rooms[idx % len(rooms)]
        for idx, persona in enumerate(sorted(personas, key=lambda p: p.id))
    }


def run_episode(
    layout: Layout,
    personas: list[Persona],
    policy_mode: str = "trait",
    seed: int = 0,
    config: EpisodeConfig | None = None,
    gateway=None,
    directives: dict[str, object] | None = None,
) -> EpisodeResult:
    """Roll out one full episode and return all trajectories plus a summary."""
    if not personas:
        raise ValueError("personas must be non-empty")
    if policy_mode not in ("trait", "explicit", "llm"):
        raise ValueError(f"unknown policy mode: {policy_mode!r}")
    if policy_mode == "llm" and gateway is None:
        raise ValueError("llm mode requires a configured gateway")
    config = config or EpisodeConfig()
    rng = random.Random(seed)
    spawns = assign_spawns(layout, personas, seed)
    agents: dict[str, AgentState] = {}
    for persona in sorted(personas, key=lambda p: p.id):
        region_id = spawns[persona.id]
        rect = layout.regions[region_id].rect
        pos = (
            rect[0] + 0.5 + rng.random() * max(rect[2] - 1.0, 0.1),
            rect[1] + 0.5 + rng.random() * max(rect[3] - 1.0, 0.1),
        )
        agents[persona.id] = AgentState(
            id=persona.id,
            persona=persona,
            position=pos,
            current_region=region_id,
        )
    world = WorldState(layout=layout, agents=agents, config=config)
    records: dict[str, list[TrajectoryRecord]] = {a: [] for a in agents}
    entry_time = (
        config.shooter_entry_time_s
        if config.shooter_entry_time_s is not None
        else layout.shooter_entry_time_s
    )
    n_total = len(agents)
    tick_trace: list[dict] | None = [] if config.collect_tick_trace else None
    shooter_trace: list[tuple[float, str]] = []

    due0 = [(agents[a], TRIGGER_START) for a in world.agent_ids()]
    _run_decisions(due0, world, policy_mode, rng, directives, gateway, records)

    ticks = int(round(config.horizon_s / config.dt))
    for tick in range(1, ticks + 1):
        now = tick * config.dt
        incident_event = False
        if world.shooter is None and now >= entry_time - _EPS:
            world.shooter = spawn_shooter(layout, now)
            world.phase = POST_INCIDENT
            incident_event = True

        prev_positions = {
            a.id: a.position for a in agents.values() if a.alive and not a.exited
        }
        if world.shooter is not None and not incident_event:
            # Shots within this tick are stamped relative to the tick start.
            world.time_s = (tick - 1) * config.dt
            _, shots = shooter_step(world.shooter, world, config.dt, rng)
            for shot in shots:
                _apply_shot(world, shot)
        world.time_s = now
        if world.shooter is not None:
            shooter_trace.append((now, world.shooter.current_region))

        for agent_id in world.agent_ids():
            agent = agents[agent_id]
            if agent.alive and not agent.exited:
                _move_agent(agent, world, config.dt)

        if tick_trace is not None:
            alive_inside = sum(
                1 for a in agents.values() if a.alive and not a.exited
            )
            exited = sum(1 for a in agents.values() if a.exited)
            down = sum(1 for a in agents.values() if not a.alive)
            tick_trace.append(
                {
                    "time_s": now,
                    "positions": {
                        aid: agents[aid].position
                        for aid in prev_positions
                    },
                    "prev_positions": prev_positions,
                    "speeds": {
                        aid: MOVEMENT_SPEED[agents[aid].movement]
                        for aid in prev_positions
                    },
                    "alive_inside": alive_inside,
                    "exited": exited,
                    "incapacitated": down,
                }
            )
        alive_inside = sum(1 for a in agents.values() if a.alive and not a.exited)
        exited_n = sum(1 for a in agents.values() if a.exited)
        down_n = sum(1 for a in agents.values() if not a.alive)
        if alive_inside + exited_n + down_n != n_total:
            raise AssertionError("population conservation violated")

        _hearing_pass(world)

        due: list[tuple[AgentState, str]] = []
        for agent_id in world.agent_ids():
            agent = agents[agent_id]
            if not agent.alive or agent.exited:
                continue
            trigger = _due_trigger(agent, world, incident_event)
            if trigger is not None:
                if trigger == TRIGGER_SHOOTER_CONTACT:
                    agent.interrupted_contact = True
                due.append((agent, trigger))
        if due:
            _run_decisions(
                due, world, policy_mode, rng, directives, gateway, records
            )
        if all(not a.alive or a.exited for a in agents.values()):
            break

    terminal: dict[str, str] = {}
    for agent_id in world.agent_ids():
        agent = agents[agent_id]
        if agent.exited:
            terminal[agent_id] = TERMINAL_EXITED
        elif not agent.alive:
            terminal[agent_id] = TERMINAL_INCAPACITATED
        elif agent.posture is Posture.HIDING:
            terminal[agent_id] = TERMINAL_HIDING
        else:
            terminal[agent_id] = TERMINAL_TIMEOUT

    trajectories = [
        Trajectory(
            agent_id=agent_id,
            persona=agents[agent_id].persona,
            records=records[agent_id],
            terminal_status=terminal[agent_id],
        )
        for agent_id in world.agent_ids()
    ]
    shooter = world.shooter
    summary = EpisodeSummary(
        seed=seed,
        policy_mode=policy_mode,
        terminal_statuses=terminal,
        shooter_shots_fired=shooter.shots_fired if shooter else 0,
        shooter_reloads_completed=shooter.reloads_completed if shooter else 0,
        shooter_magazine=shooter.magazine if shooter else 30,
        shooter_trace=shooter_trace,
        personas={p.id: p.to_json_dict() for p in personas},
    )
    return EpisodeResult(
        trajectories=trajectories, summary=summary, tick_trace=tick_trace
    )
