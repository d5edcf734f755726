"""Static building layouts: regions, doors, interest points, navigation.

A layout is a bidirectional region graph. Within-region movement is
straight-line; cross-region movement routes through door positions via
shortest path on the graph. Two layouts ship with the package:
``school.json`` and ``office.json``.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

REGION_KINDS = (
    "classroom",
    "lounge",
    "corridor",
    "cafeteria",
    "kitchen",
    "bathroom",
    "entrance",
    "yard",
)

Point = tuple[float, float]


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class InterestPoint:
    """A positioned point of interest (hiding spot or exit) inside a region."""

    id: str
    pos: Point
    descriptor: str

    def __post_init__(self) -> None:
        if not self.descriptor:
            raise ValueError(f"interest point {self.id!r} has empty descriptor")


@dataclass(frozen=True)
class Region:
    id: str
    kind: str
    rect: tuple[float, float, float, float]  # x, y, width, height (meters)
    hiding_spots: tuple[InterestPoint, ...] = ()
    exits: tuple[InterestPoint, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in REGION_KINDS:
            raise ValueError(f"region {self.id!r} has unknown kind {self.kind!r}")
        x, y, w, h = self.rect
        if w <= 0 or h <= 0:
            raise ValueError(f"region {self.id!r} has non-positive extent")
        for point in (*self.hiding_spots, *self.exits):
            if not self.contains(point.pos):
                raise ValueError(
                    f"interest point {point.id!r} lies outside region {self.id!r}"
                )

    def contains(self, pos: Point) -> bool:
        x, y, w, h = self.rect
        return x <= pos[0] <= x + w and y <= pos[1] <= y + h

    def center(self) -> Point:
        x, y, w, h = self.rect
        return (x + w / 2.0, y + h / 2.0)


@dataclass(frozen=True)
class Door:
    a: str
    b: str
    pos: Point


@dataclass
class Layout:
    """Validated, immutable-after-load region graph."""

    regions: dict[str, Region]
    doors: list[Door]
    patrol_route: list[str]
    shooter_entry_time_s: float
    bounds: tuple[float, float] = field(init=False)
    _neighbors: dict[str, list[tuple[str, Point]]] = field(init=False, repr=False)
    _exit_hops: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._validate()
        max_x = max(r.rect[0] + r.rect[2] for r in self.regions.values())
        max_y = max(r.rect[1] + r.rect[3] for r in self.regions.values())
        self.bounds = (max_x, max_y)
        neighbors: dict[str, list[tuple[str, Point]]] = {r: [] for r in self.regions}
        for door in self.doors:
            neighbors[door.a].append((door.b, door.pos))
            neighbors[door.b].append((door.a, door.pos))
        self._neighbors = {r: sorted(n) for r, n in neighbors.items()}
        self._exit_hops = self._compute_exit_hops()

    def _validate(self) -> None:
        if not self.regions:
            raise ValueError("layout has no regions")
        for door in self.doors:
            if door.a == door.b:
                raise ValueError(f"door connects region {door.a!r} to itself")
            for rid in (door.a, door.b):
                if rid not in self.regions:
                    raise ValueError(f"dangling door reference: {rid!r}")
        for rid in self.patrol_route:
            if rid not in self.regions:
                raise ValueError(f"patrol route references missing region {rid!r}")
        # Connectivity over the door graph.
        if len(self.regions) > 1:
            adjacency: dict[str, set[str]] = {r: set() for r in self.regions}
            for door in self.doors:
                adjacency[door.a].add(door.b)
                adjacency[door.b].add(door.a)
            start = next(iter(sorted(self.regions)))
            seen = {start}
            stack = [start]
            while stack:
                current = stack.pop()
                for nxt in adjacency[current]:
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            unreachable = sorted(set(self.regions) - seen)
            if unreachable:
                raise ValueError(f"disconnected region graph: {unreachable}")

    # -- static queries ----------------------------------------------------

    def region_ids(self) -> list[str]:
        return sorted(self.regions)

    def neighbors(self, region_id: str) -> list[str]:
        return [rid for rid, _ in self._neighbors[region_id]]

    def door_position(self, a: str, b: str) -> Point:
        for rid, pos in self._neighbors[a]:
            if rid == b:
                return pos
        raise ValueError(f"no door between {a!r} and {b!r}")

    def degree(self, region_id: str) -> int:
        return len(self._neighbors[region_id])

    def exit_regions(self) -> list[str]:
        return sorted(r.id for r in self.regions.values() if r.exits)

    def all_exits(self) -> list[tuple[str, InterestPoint]]:
        out = []
        for rid in self.region_ids():
            for ex in self.regions[rid].exits:
                out.append((rid, ex))
        return out

    def count_hiding_spots(self) -> int:
        return sum(len(r.hiding_spots) for r in self.regions.values())

    def count_exits(self) -> int:
        return sum(len(r.exits) for r in self.regions.values())

    def _compute_exit_hops(self) -> dict[str, int]:
        """Hop distance from every region to the nearest exit-bearing region."""
        hops = {rid: math.inf for rid in self.regions}
        frontier = []
        for rid in self.exit_regions():
            hops[rid] = 0
            frontier.append(rid)
        while frontier:
            nxt_frontier = []
            for rid in frontier:
                for nid in self.neighbors(rid):
                    if hops[nid] > hops[rid] + 1:
                        hops[nid] = hops[rid] + 1
                        nxt_frontier.append(nid)
            frontier = nxt_frontier
        return {rid: int(h) if h != math.inf else 10**6 for rid, h in hops.items()}

    def exit_hops(self, region_id: str) -> int:
        return self._exit_hops[region_id]

    # -- navigation --------------------------------------------------------

    def region_path(self, start: str, goal: str) -> list[str]:
        """Region sequence from start to goal, shortest by door-to-door length."""
        if start == goal:
            return [start]
        dist: dict[str, float] = {start: 0.0}
        prev: dict[str, str] = {}
        entry_pos: dict[str, Point] = {start: self.regions[start].center()}
        heap: list[tuple[float, str]] = [(0.0, start)]
        visited: set[str] = set()
        while heap:
            d, current = heapq.heappop(heap)
            if current in visited:
                continue
            visited.add(current)
            if current == goal:
                break
            for nid, door_pos in self._neighbors[current]:
                step = distance(entry_pos[current], door_pos)
                nd = d + max(step, 1e-6)
                if nd < dist.get(nid, math.inf) - 1e-12:
                    dist[nid] = nd
                    prev[nid] = current
                    entry_pos[nid] = door_pos
                    heapq.heappush(heap, (nd, nid))
        if goal not in prev and goal != start:
            raise ValueError(f"no path from {start!r} to {goal!r}")
        path = [goal]
        while path[-1] != start:
            path.append(prev[path[-1]])
        path.reverse()
        return path

    def next_region_toward(self, start: str, goal: str) -> str:
        path = self.region_path(start, goal)
        return path[1] if len(path) > 1 else start

    def waypoints(self, pos: Point, start_region: str, goal_region: str,
                  goal_pos: Point) -> list[tuple[Point, str]]:
        """Waypoint chain (position, region entered) to reach goal_pos."""
        path = self.region_path(start_region, goal_region)
        points: list[tuple[Point, str]] = []
        for a, b in zip(path, path[1:]):
            points.append((self.door_position(a, b), b))
        points.append((goal_pos, goal_region))
        return points


def _parse_interest_points(items: Iterable[Mapping]) -> tuple[InterestPoint, ...]:
    return tuple(
        InterestPoint(
            id=item["id"],
            pos=(float(item["pos"][0]), float(item["pos"][1])),
            descriptor=item.get("descriptor", ""),
        )
        for item in items
    )


def parse_layout(document: Mapping) -> Layout:
    """Validate a layout JSON document into a Layout."""
    regions: dict[str, Region] = {}
    for entry in document["regions"]:
        region = Region(
            id=entry["id"],
            kind=entry["kind"],
            rect=tuple(float(v) for v in entry["rect"]),
            hiding_spots=_parse_interest_points(entry.get("hiding_spots", ())),
            exits=_parse_interest_points(entry.get("exits", ())),
        )
        if region.id in regions:
            raise ValueError(f"duplicate region id: {region.id!r}")
        regions[region.id] = region
    doors = [
        Door(a=d["a"], b=d["b"], pos=(float(d["pos"][0]), float(d["pos"][1])))
        for d in document.get("doors", ())
    ]
    return Layout(
        regions=regions,
        doors=doors,
        patrol_route=list(document.get("patrol_route", ())),
        shooter_entry_time_s=float(document.get("shooter_entry_time_s", 10.0)),
    )


def load_layout(path: str | Path) -> Layout:
    with open(path, encoding="utf-8") as fh:
        return parse_layout(json.load(fh))


def bundled_layout_path(name: str) -> Path:
    path = Path(__file__).parent / "data" / f"{name}.json"
    if not path.exists():
        raise ValueError(f"no bundled layout named {name!r}")
    return path


def load_bundled_layout(name: str) -> Layout:
    """Load a bundled layout by name ("school" or "office")."""
    return load_layout(bundled_layout_path(name))
