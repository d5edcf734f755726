"""Hard-coded shooter model: route patrol, interval fire, magazine/reload."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .layout import Layout, Point, distance

SHOOTER_SPEED = 2.5  # m/s
FIRE_INTERVAL = 0.2  # seconds between shots while a target is visible
MAGAZINE_SIZE = 30
RELOAD_SECONDS = 0.5
HIT_PROBABILITY = 0.5
DAMAGE_PER_HIT = 50

_EPS = 1e-9


@dataclass(frozen=True)
class Shot:
    time_s: float
    region: str
    target_id: str
    hit: bool


@dataclass
class ShooterState:
    position: Point
    current_region: str
    patrol_route: list[str]
    active_since: float
    magazine: int = MAGAZINE_SIZE
    reload_timer: float = 0.0
    fire_accumulator: float = 0.0
    shots_fired: int = 0
    reloads_completed: int = 0
    route_index: int = 0
    waypoints: list[tuple[Point, str]] = field(default_factory=list)

    def ammunition_accounting(self) -> int:
        """Total shots implied by reload count and remaining magazine."""
        return MAGAZINE_SIZE * self.reloads_completed + (MAGAZINE_SIZE - self.magazine)


def spawn_shooter(layout: Layout, time_s: float) -> ShooterState:
    """Place the shooter at the start of the patrol route."""
    if not layout.patrol_route:
        raise ValueError("layout has no patrol route")
    start = layout.patrol_route[0]
    state = ShooterState(
        position=layout.regions[start].center(),
        current_region=start,
        patrol_route=list(layout.patrol_route),
        active_since=time_s,
    )
    _plan_next_leg(state, layout)
    return state


def _plan_next_leg(state: ShooterState, layout: Layout) -> None:
    route = state.patrol_route
    state.route_index = (state.route_index + 1) % len(route)
    goal = route[state.route_index]
    goal_pos = layout.regions[goal].center()
    state.waypoints = layout.waypoints(
        state.position, state.current_region, goal, goal_pos
    )


def _advance_position(state: ShooterState, layout: Layout, seconds: float) -> None:
    budget = SHOOTER_SPEED * seconds
    while budget > _EPS:
        if not state.waypoints:
            _plan_next_leg(state, layout)
            if not state.waypoints:
                return
        target, region = state.waypoints[0]
        gap = distance(state.position, target)
        if gap <= budget + _EPS:
            state.position = target
            state.current_region = region
            state.waypoints.pop(0)
            budget -= gap
        else:
            frac = budget / gap
            state.position = (
                state.position[0] + (target[0] - state.position[0]) * frac,
                state.position[1] + (target[1] - state.position[1]) * frac,
            )
            budget = 0.0


def shooter_step(
    state: ShooterState,
    world,
    dt: float,
    rng: random.Random,
) -> tuple[ShooterState, list[Shot]]:
    """Advance the shooter by dt, firing one round per elapsed interval when
    at least one civilian shares the region and the magazine is non-empty.

    ``world`` must expose ``time_s`` and ``civilians_in_region(region_id)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    shots: list[Shot] = []
    remaining = dt
    elapsed = 0.0
    while remaining > _EPS:
        if state.reload_timer > 0:
            step = min(state.reload_timer, remaining)
            _advance_position(state, layout=world.layout, seconds=step)
            state.reload_timer -= step
            remaining -= step
            elapsed += step
            if state.reload_timer <= _EPS:
                state.reload_timer = 0.0
                state.magazine = MAGAZINE_SIZE
                state.reloads_completed += 1
            continue
        step = min(remaining, FIRE_INTERVAL - state.fire_accumulator)
        _advance_position(state, layout=world.layout, seconds=step)
        state.fire_accumulator += step
        remaining -= step
        elapsed += step
        if state.fire_accumulator >= FIRE_INTERVAL - _EPS:
            state.fire_accumulator = 0.0
            visible = sorted(world.civilians_in_region(state.current_region))
            if visible and state.magazine > 0:
                target = visible[rng.randrange(len(visible))]
                hit = rng.random() < HIT_PROBABILITY
                shots.append(
                    Shot(
                        time_s=world.time_s + elapsed,
                        region=state.current_region,
                        target_id=target,
                        hit=hit,
                    )
                )
                state.magazine -= 1
                state.shots_fired += 1
                if state.magazine == 0:
                    state.reload_timer = RELOAD_SECONDS
    return state, shots
