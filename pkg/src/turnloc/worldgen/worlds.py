"""Procedural floor maps: jittered room grids, landmarks, waypoint graphs.

Coordinates are (row, col) pixels.  Rooms tile the interior between jittered
grid cuts, so rectangles never overlap; each grid-adjacent room pair gets a
doorway through the shared wall.  Waypoint ids are assigned room centers
first (node i is room i's center for i < len(rooms)), then one node per
doorway, placed on the first interior column/row of the second room so that
rectangle containment is unambiguous.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

ROOM_LABELS = [
    "bedroom", "kitchen", "bathroom", "office", "library", "pantry",
    "hallway", "lounge", "studio", "nursery", "gym", "closet",
]

LANDMARK_LABELS = [
    "plant", "sofa", "table", "lamp", "mirror", "piano", "bookshelf", "sink",
    "stove", "desk", "rug", "clock", "vase", "fireplace", "window", "cabinet",
]

# Fixed palettes (0..255 RGB): light floors keyed by room label, saturated
# landmark colors, black walls on a white background.
ROOM_COLORS = {
    "bedroom": (255, 214, 214), "kitchen": (214, 255, 214), "bathroom": (214, 214, 255),
    "office": (255, 244, 204), "library": (236, 214, 255), "pantry": (214, 246, 255),
    "hallway": (232, 232, 232), "lounge": (255, 228, 196), "studio": (220, 255, 240),
    "nursery": (255, 222, 244), "gym": (228, 255, 200), "closet": (240, 230, 214),
}

LANDMARK_COLORS = {
    "plant": (0, 128, 0), "sofa": (178, 34, 34), "table": (139, 69, 19),
    "lamp": (255, 165, 0), "mirror": (70, 130, 180), "piano": (25, 25, 112),
    "bookshelf": (160, 82, 45), "sink": (0, 139, 139), "stove": (105, 105, 105),
    "desk": (85, 107, 47), "rug": (199, 21, 133), "clock": (184, 134, 11),
    "vase": (72, 61, 139), "fireplace": (205, 92, 92), "window": (30, 144, 255),
    "cabinet": (128, 0, 128),
}

WALL_COLOR = (0, 0, 0)
BACKGROUND_COLOR = (255, 255, 255)
DOOR_SPAN = 3  # opening width in native pixels


class GenerationError(RuntimeError):
    """Raised when a world/dialog draw cannot satisfy its constraints."""


@dataclass
class Room:
    room_id: str
    label: str
    rect: tuple[int, int, int, int]  # (row0, col0, height, width), pixel-disjoint

    def contains(self, pos: tuple[int, int]) -> bool:
        r0, c0, h, w = self.rect
        return r0 <= pos[0] < r0 + h and c0 <= pos[1] < c0 + w

    @property
    def center(self) -> tuple[int, int]:
        r0, c0, h, w = self.rect
        return (r0 + h // 2, c0 + w // 2)


@dataclass
class Landmark:
    label: str
    room_id: str
    position: tuple[int, int]


@dataclass
class WorldParams:
    grid_rooms: tuple[int, int] = (3, 3)
    size_px: int = 64
    meters_per_pixel: float = 0.25
    room_vocab: tuple[str, ...] = tuple(ROOM_LABELS)
    landmark_vocab: tuple[str, ...] = tuple(LANDMARK_LABELS)
    distinct_labels: int = 6  # label pool per world; fewer than rooms forces duplicates
    landmarks_per_room: tuple[int, int] = (1, 3)

    def __post_init__(self):
        gr, gc = self.grid_rooms
        if gr < 2 or gc < 2:
            raise GenerationError(f"grid must be at least 2x2, got {self.grid_rooms}")
        if self.meters_per_pixel <= 0:
            raise GenerationError("meters_per_pixel must be positive")
        if not 1 <= self.distinct_labels <= len(self.room_vocab):
            raise GenerationError("distinct_labels outside room vocabulary size")
        lo, hi = self.landmarks_per_room
        if lo < 0 or hi < lo or hi > len(self.landmark_vocab):
            raise GenerationError(f"bad landmarks_per_room range {self.landmarks_per_room}")


@dataclass
class WorldMap:
    world_id: str
    width_px: int
    height_px: int
    meters_per_pixel: float
    rooms: list[Room]
    landmarks: list[Landmark]
    nodes: list[tuple[int, int]]  # node i -> (row, col); i < len(rooms) is room i's center
    edges: list[tuple[int, int, float]]  # (node_a, node_b, length_meters)
    _room_of_node: dict[int, int] = field(default_factory=dict, repr=False)

    _adjacency: list[list[tuple[int, float]]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self._room_of_node:
            for nid, pos in enumerate(self.nodes):
                for ri, room in enumerate(self.rooms):
                    if room.contains(pos):
                        self._room_of_node[nid] = ri
                        break
        self._adjacency = [[] for _ in self.nodes]
        for a, b, length in self.edges:
            self._adjacency[a].append((b, length))
            self._adjacency[b].append((a, length))

    def room_of_node(self, node_id: int) -> Room:
        return self.rooms[self._room_of_node[node_id]]

    def room_index_of_node(self, node_id: int) -> int:
        return self._room_of_node[node_id]

    def nodes_in_room(self, room_index: int) -> list[int]:
        return [nid for nid, ri in sorted(self._room_of_node.items()) if ri == room_index]

    def landmarks_in_room(self, room_id: str) -> list[Landmark]:
        return [lm for lm in self.landmarks if lm.room_id == room_id]

    def neighbors(self, node_id: int) -> list[tuple[int, float]]:
        return self._adjacency[node_id]

    def adjacent_room_labels(self, room_index: int) -> set[str]:
        """Labels of rooms reachable through one doorway from the given room."""
        labels: set[str] = set()
        center = room_index  # center node id == room index
        for door, _ in self.neighbors(center):
            for other, _ in self.neighbors(door):
                if other != center:
                    labels.add(self.rooms[other].label)
        return labels

    def is_center_node(self, node_id: int) -> bool:
        return node_id < len(self.rooms)

    def doorway_between(self, node_id: int) -> tuple[int, int] | None:
        """For a doorway node, the two room indices it joins (else None)."""
        if self.is_center_node(node_id):
            return None
        rooms = sorted(other for other, _ in self.neighbors(node_id))
        return (rooms[0], rooms[1]) if len(rooms) == 2 else None

    def to_json_dict(self) -> dict:
        return {
            "worldId": self.world_id,
            "widthPx": self.width_px,
            "heightPx": self.height_px,
            "metersPerPixel": round(self.meters_per_pixel, 6),
            "rooms": [
                {"roomId": r.room_id, "label": r.label, "rect": list(r.rect)} for r in self.rooms
            ],
            "landmarks": [
                {"label": lm.label, "roomId": lm.room_id, "position": list(lm.position)}
                for lm in self.landmarks
            ],
            "waypointGraph": {
                "nodes": [{"nodeId": i, "position": list(p)} for i, p in enumerate(self.nodes)],
                "edges": [
                    {"nodeA": a, "nodeB": b, "length": round(length, 6)} for a, b, length in self.edges
                ],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, data: dict) -> "WorldMap":
        rooms = [Room(r["roomId"], r["label"], tuple(r["rect"])) for r in data["rooms"]]
        landmarks = [
            Landmark(lm["label"], lm["roomId"], tuple(lm["position"])) for lm in data["landmarks"]
        ]
        graph = data["waypointGraph"]
        nodes = [tuple(n["position"]) for n in sorted(graph["nodes"], key=lambda n: n["nodeId"])]
        edges = [(e["nodeA"], e["nodeB"], float(e["length"])) for e in graph["edges"]]
        return cls(
            world_id=data["worldId"],
            width_px=data["widthPx"],
            height_px=data["heightPx"],
            meters_per_pixel=float(data["metersPerPixel"]),
            rooms=rooms,
            landmarks=landmarks,
            nodes=nodes,
            edges=edges,
        )

    @classmethod
    def from_json(cls, text: str) -> "WorldMap":
        return cls.from_json_dict(json.loads(text))


def _cuts(extent: int, parts: int, rng: np.random.Generator, min_size: int = 10) -> list[int]:
    """Grid cut positions in [1, extent-1], evenly spaced then jittered."""
    base = [1 + round(i * (extent - 2) / parts) for i in range(parts + 1)]
    cuts = list(base)
    for i in range(1, parts):
        jitter = int(rng.integers(-2, 3))
        lo = cuts[i - 1] + min_size
        hi = base[i + 1] - min_size  # bound against the un-jittered next cut
        cuts[i] = max(lo, min(hi, base[i] + jitter))
    return cuts


def generate_world(seed: int, params: WorldParams | None = None) -> WorldMap:
    """Deterministically synthesize a floor map from a seed."""
    params = params or WorldParams()
    rng = np.random.default_rng(seed)
    size = params.size_px
    grows, gcols = params.grid_rooms

    rcuts = _cuts(size, grows, rng)
    ccuts = _cuts(size, gcols, rng)

    label_pool = sorted(rng.choice(params.room_vocab, size=params.distinct_labels, replace=False))
    rooms: list[Room] = []
    for i in range(grows):
        for j in range(gcols):
            r0, r1 = rcuts[i], rcuts[i + 1]
            c0, c1 = ccuts[j], ccuts[j + 1]
            label = str(rng.choice(label_pool))
            rooms.append(Room(room_id=f"r{len(rooms)}", label=label, rect=(r0, c0, r1 - r0, c1 - c0)))

    nodes: list[tuple[int, int]] = [room.center for room in rooms]
    edges: list[tuple[int, int, float]] = []

    def room_index(i: int, j: int) -> int:
        return i * gcols + j

    def add_door(a: int, b: int, pos: tuple[int, int]) -> None:
        nid = len(nodes)
        nodes.append(pos)
        for center in (a, b):
            dist = math.dist(nodes[center], pos) * params.meters_per_pixel
            edges.append((center, nid, round(dist, 6)))

    for i in range(grows):
        for j in range(gcols):
            here = room_index(i, j)
            if j + 1 < gcols:  # vertical wall; the node sits on the right room's border column
                right = room_index(i, j + 1)
                r0, _, h, _ = rooms[here].rect
                row = r0 + h // 2
                add_door(here, right, (row, ccuts[j + 1]))
            if i + 1 < grows:  # horizontal wall; the node sits on the lower room's border row
                below = room_index(i + 1, j)
                _, c0, _, w = rooms[here].rect
                col = c0 + w // 2
                add_door(here, below, (rcuts[i + 1], col))

    landmarks: list[Landmark] = []
    lo, hi = params.landmarks_per_room
    for room in rooms:
        count = int(rng.integers(lo, hi + 1)) if hi > lo else lo
        if count == 0:
            continue
        labels = rng.choice(params.landmark_vocab, size=count, replace=False)
        r0, c0, h, w = room.rect
        taken: list[tuple[int, int]] = [room.center]
        for label in labels:
            for _ in range(20):
                pos = (int(rng.integers(r0 + 2, r0 + h - 2)), int(rng.integers(c0 + 2, c0 + w - 2)))
                if all(max(abs(pos[0] - t[0]), abs(pos[1] - t[1])) >= 3 for t in taken):
                    break
            taken.append(pos)
            landmarks.append(Landmark(label=str(label), room_id=room.room_id, position=pos))

    world = WorldMap(
        world_id=f"w{seed:08d}",
        width_px=size,
        height_px=size,
        meters_per_pixel=params.meters_per_pixel,
        rooms=rooms,
        landmarks=landmarks,
        nodes=nodes,
        edges=edges,
    )
    _validate_world(world)
    return world


def _validate_world(world: WorldMap) -> None:
    for i, a in enumerate(world.rooms):
        r0, c0, h, w = a.rect
        if r0 < 0 or c0 < 0 or r0 + h > world.height_px or c0 + w > world.width_px:
            raise GenerationError(f"room {a.room_id} leaves the map")
        for b in world.rooms[i + 1 :]:
            s0, d0, sh, sw = b.rect
            if r0 < s0 + sh and s0 < r0 + h and c0 < d0 + sw and d0 < c0 + w:
                raise GenerationError(f"rooms {a.room_id} and {b.room_id} overlap")
    for nid, pos in enumerate(world.nodes):
        if nid not in world._room_of_node:
            raise GenerationError(f"node {nid} at {pos} is outside every room")
    # connectivity by traversal
    seen = {0}
    frontier = [0]
    while frontier:
        cur = frontier.pop()
        for other, _ in world.neighbors(cur):
            if other not in seen:
                seen.add(other)
                frontier.append(other)
    if len(seen) != len(world.nodes):
        raise GenerationError("waypoint graph is not connected")
    for a, b, length in world.edges:
        expect = math.dist(world.nodes[a], world.nodes[b]) * world.meters_per_pixel
        if abs(length - expect) > 1e-6:
            raise GenerationError(f"edge ({a},{b}) length {length} != {expect}")


DEMO_WORLD_SEED = 2023  # two rooms share the "bedroom" label; 2-turn dialogs resolve them


def make_demo_world() -> WorldMap:
    """The two-bedroom demo floor used by the operator console and tests."""
    return generate_world(DEMO_WORLD_SEED)


def rasterize(world: WorldMap, size_px: int = 64) -> np.ndarray:
    """Render the map as float32 [3, size, size] in [0,1].

    Room floors use the per-label palette, walls are black on a white
    background, landmarks are 3x3 squares in their own palette, and doorway
    openings are carved through the shared walls.
    """
    if size_px not in (64, 224):
        raise ValueError(f"raster size must be 64 or 224, got {size_px}")
    scale = size_px / world.width_px
    img = np.empty((size_px, size_px, 3), dtype=np.float32)
    img[:] = np.array(BACKGROUND_COLOR, dtype=np.float32) / 255.0

    def sc(v: int) -> int:
        return int(round(v * scale))

    for room in world.rooms:
        r0, c0, h, w = room.rect
        rr0, cc0 = sc(r0), sc(c0)
        rr1, cc1 = sc(r0 + h - 1), sc(c0 + w - 1)
        img[rr0 : rr1 + 1, cc0 : cc1 + 1] = np.array(ROOM_COLORS[room.label], dtype=np.float32) / 255.0
        wall = np.array(WALL_COLOR, dtype=np.float32) / 255.0
        img[rr0, cc0 : cc1 + 1] = wall
        img[rr1, cc0 : cc1 + 1] = wall
        img[rr0 : rr1 + 1, cc0] = wall
        img[rr0 : rr1 + 1, cc1] = wall

    # carve door openings: paint the wall pixels around each doorway node with
    # the floor colors of the two rooms it joins
    half = max(1, int(round(DOOR_SPAN * scale))) // 2
    for nid in range(len(world.rooms), len(world.nodes)):
        pair = world.doorway_between(nid)
        if pair is None:
            continue
        a, b = pair
        row, col = world.nodes[nid]
        rr, cc = sc(row), sc(col)
        vertical = abs(world.nodes[a][1] - world.nodes[b][1]) > abs(world.nodes[a][0] - world.nodes[b][0])
        color_a = np.array(ROOM_COLORS[world.rooms[a].label], dtype=np.float32) / 255.0
        color_b = np.array(ROOM_COLORS[world.rooms[b].label], dtype=np.float32) / 255.0
        if vertical:  # wall runs north-south; opening spans rows
            img[rr - half : rr + half + 1, cc - 1] = color_a
            img[rr - half : rr + half + 1, cc] = color_b
        else:
            img[rr - 1, cc - half : cc + half + 1] = color_a
            img[rr, cc - half : cc + half + 1] = color_b

    for lm in world.landmarks:
        r, c = sc(lm.position[0]), sc(lm.position[1])
        color = np.array(LANDMARK_COLORS[lm.label], dtype=np.float32) / 255.0
        img[max(0, r - 1) : r + 2, max(0, c - 1) : c + 2] = color

    return np.ascontiguousarray(img.transpose(2, 0, 1))
