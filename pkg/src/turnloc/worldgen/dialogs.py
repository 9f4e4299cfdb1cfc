"""Multi-turn localization dialogs with a certified ambiguity schedule.

Each observer answer states one or two facts about the target node.  Facts
are predicates over waypoint nodes, so the set of nodes consistent with the
dialog so far is computable by exhaustive filtering.  The generator searches
fact orderings (seeded, depth-first over precomputed fact->node sets) until
that set shrinks strictly every turn and reaches exactly one node at the
final turn; the returned schedule is then re-verified through the
independent `consistent_nodes` filter.  The observer stays on the target
node for the whole dialog (the sample type carries one node per turn
regardless, so movement stays representable).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .vocab import Vocabulary, tokenize_turn
from .worlds import GenerationError, WorldMap

MAX_TURNS = 6
NEAR_LANDMARK_PX = 6  # "right beside me" radius in native pixels


@dataclass(frozen=True)
class Fact:
    kind: str  # room | landmark | near_landmark | neighbor | cardinal | spot_center | spot_door
    value: str = ""


@dataclass
class DialogSample:
    sample_id: str
    world_id: str
    turns: list[tuple[str, str]]  # (locator utterance, observer utterance)
    turn_tokens: list[list[int]]
    observer_nodes: list[int]
    final_node: int
    final_pixel: tuple[int, int]

    @property
    def num_turns(self) -> int:
        return len(self.turns)

    def to_json_dict(self) -> dict:
        return {
            "sampleId": self.sample_id,
            "worldId": self.world_id,
            "turns": [list(t) for t in self.turns],
            "turnTokens": self.turn_tokens,
            "observerNodePerTurn": self.observer_nodes,
            "finalNode": self.final_node,
            "finalPixel": list(self.final_pixel),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DialogSample":
        return cls(
            sample_id=data["sampleId"],
            world_id=data["worldId"],
            turns=[tuple(t) for t in data["turns"]],
            turn_tokens=[list(map(int, t)) for t in data["turnTokens"]],
            observer_nodes=list(map(int, data["observerNodePerTurn"])),
            final_node=int(data["finalNode"]),
            final_pixel=tuple(data["finalPixel"]),
        )


@dataclass
class GeneratedDialog:
    sample: DialogSample
    facts_per_turn: list[list[Fact]]
    consistent_per_turn: list[list[int]]

    @property
    def all_facts(self) -> list[Fact]:
        return [f for turn in self.facts_per_turn for f in turn]


def fact_holds(world: WorldMap, node_id: int, fact: Fact) -> bool:
    room = world.room_of_node(node_id)
    if fact.kind == "room":
        return room.label == fact.value
    if fact.kind == "landmark":
        return any(lm.label == fact.value for lm in world.landmarks_in_room(room.room_id))
    if fact.kind == "near_landmark":
        r, c = world.nodes[node_id]
        return any(
            lm.label == fact.value
            and (lm.position[0] - r) ** 2 + (lm.position[1] - c) ** 2 <= NEAR_LANDMARK_PX**2
            for lm in world.landmarks
        )
    if fact.kind == "neighbor":
        return fact.value in world.adjacent_room_labels(world.room_index_of_node(node_id))
    if fact.kind == "cardinal":
        r, c = world.nodes[node_id]
        if fact.value == "north":
            return r < world.height_px / 2
        if fact.value == "south":
            return r >= world.height_px / 2
        if fact.value == "west":
            return c < world.width_px / 2
        if fact.value == "east":
            return c >= world.width_px / 2
        raise ValueError(f"unknown direction {fact.value!r}")
    if fact.kind == "spot_center":
        return world.is_center_node(node_id)
    if fact.kind == "spot_door":
        pair = world.doorway_between(node_id)
        if pair is None:
            return False
        containing = world.room_index_of_node(node_id)
        other = pair[0] if pair[1] == containing else pair[1]
        return world.rooms[other].label == fact.value
    raise ValueError(f"unknown fact kind {fact.kind!r}")


def consistent_nodes(world: WorldMap, facts: list[Fact]) -> list[int]:
    """Exhaustive filter: node ids satisfying every fact, ascending."""
    return [
        nid for nid in range(len(world.nodes)) if all(fact_holds(world, nid, f) for f in facts)
    ]


def _facts_true_of(world: WorldMap, node_id: int) -> list[Fact]:
    room = world.room_of_node(node_id)
    facts = [Fact("landmark", lm.label) for lm in world.landmarks_in_room(room.room_id)]
    r, c = world.nodes[node_id]
    facts += sorted(
        {
            Fact("near_landmark", lm.label)
            for lm in world.landmarks
            if (lm.position[0] - r) ** 2 + (lm.position[1] - c) ** 2 <= NEAR_LANDMARK_PX**2
        },
        key=lambda f: f.value,
    )
    facts += [
        Fact("neighbor", label)
        for label in sorted(world.adjacent_room_labels(world.room_index_of_node(node_id)))
    ]
    facts.append(Fact("cardinal", "north" if r < world.height_px / 2 else "south"))
    facts.append(Fact("cardinal", "west" if c < world.width_px / 2 else "east"))
    if world.is_center_node(node_id):
        facts.append(Fact("spot_center"))
    else:
        pair = world.doorway_between(node_id)
        if pair is not None:
            containing = world.room_index_of_node(node_id)
            other = pair[0] if pair[1] == containing else pair[1]
            facts.append(Fact("spot_door", world.rooms[other].label))
    return facts


# preference order for observer facts: position- and adjacency-based facts
# ground more reliably than the small landmark percepts
_KIND_PREFERENCE = {
    "cardinal": 0,
    "neighbor": 0,
    "spot_center": 0,
    "spot_door": 1,
    "landmark": 1,
    "near_landmark": 2,
}


def _search_schedule(
    fact_sets: dict[Fact, frozenset[int]],
    pool: list[Fact],
    start: frozenset[int],
    target: int,
    t_total: int,
    rng: np.random.Generator,
) -> list[list[Fact]] | None:
    """Single-fact turns 2..T-1, single- or two-fact final turn; every turn
    shrinks the consistent set strictly and turn T lands exactly on target."""

    def final_options(current: frozenset[int], chosen: list[Fact]) -> list[list[Fact]]:
        remaining = [f for f in pool if f not in chosen]
        single = [[f] for f in remaining if current & fact_sets[f] == {target}]
        if single:
            single.sort(key=lambda fs: _KIND_PREFERENCE[fs[0].kind])
            best = _KIND_PREFERENCE[single[0][0].kind]
            return [fs for fs in single if _KIND_PREFERENCE[fs[0].kind] == best]
        pairs = []
        for fa, fb in combinations(remaining, 2):
            if current & fact_sets[fa] & fact_sets[fb] == {target}:
                pairs.append([fa, fb])
        pairs.sort(key=lambda fs: max(_KIND_PREFERENCE[f.kind] for f in fs))
        return pairs

    def dfs(chosen: list[Fact], current: frozenset[int], depth: int) -> list[list[Fact]] | None:
        if depth == t_total - 1:  # choose the closing turn
            finals = final_options(current, chosen)
            if not finals:
                return None
            pick = finals[int(rng.integers(0, len(finals)))]
            return [[f] for f in chosen] + [pick]
        remaining = [f for f in pool if f not in chosen]
        options = []
        for idx in rng.permutation(len(remaining)):
            fact = remaining[int(idx)]
            nxt = current & fact_sets[fact]
            if not nxt:
                continue
            if len(nxt) < len(current):
                rank = 1 if len(nxt) == 1 else 0  # keep ambiguity alive mid-dialog
            else:
                rank = 2  # redundant-but-true filler, last resort for long dialogs
            options.append((rank, _KIND_PREFERENCE[fact.kind], fact, nxt))
        options.sort(key=lambda item: (item[0], item[1]))
        for _, _, fact, nxt in options:
            found = dfs(chosen + [fact], nxt, depth + 1)
            if found is not None:
                return found
        return None

    if len(start) < 2:
        return None
    return dfs([], start, 1)


_LOCATOR_TEMPLATES = {
    "room": ["where are you", "which room are you in", "can you describe the room"],
    "landmark": ["what can you see", "what objects are nearby", "do you see anything notable"],
    "near_landmark": ["what is right beside you", "anything right next to you"],
    "neighbor": ["what is next to your room", "which room is adjacent to you"],
    "cardinal": ["which part of the floor are you in", "where on the map are you"],
    "spot_center": ["where exactly are you standing", "are you near a door"],
    "spot_door": ["where exactly are you standing", "are you near a door"],
}

_OBSERVER_TEMPLATES = {
    "room": ["i am in the {v}", "this looks like a {v}", "i am standing in a {v}"],
    "landmark": ["i can see a {v}", "there is a {v} here", "next to me is a {v}"],
    "near_landmark": ["right beside me is a {v}", "the {v} is right beside me"],
    "neighbor": ["my room is next to the {v}", "there is a {v} through the door"],
    "cardinal": ["i am in the {v} part of the floor", "somewhere in the {v} half"],
    "spot_center": ["i am in the middle of the room", "i am standing in the middle"],
    "spot_door": ["i am standing in the doorway to the {v}", "i am in the door to the {v}"],
}


def render_turn(facts: list[Fact], rng: np.random.Generator) -> tuple[str, str]:
    """One locator/observer utterance pair stating the given facts."""
    if facts[0].kind == "room" and len(facts) == 2 and facts[1].kind == "spot_center":
        return "where exactly are you", f"i am in the middle of the {facts[0].value}"
    lead = facts[0]
    q = _LOCATOR_TEMPLATES[lead.kind]
    question = q[int(rng.integers(0, len(q)))]
    clauses = []
    for fact in facts:
        a = _OBSERVER_TEMPLATES[fact.kind]
        clauses.append(a[int(rng.integers(0, len(a)))].format(v=fact.value))
    return question, " and ".join(clauses)


# exact observer templates carrying no value slot
_PARSE_EXACT = {
    "i am in the middle of the room": [Fact("spot_center")],
    "i am standing in the middle": [Fact("spot_center")],
}

# (kind, prefix, suffix), most specific first; {v} sits between them
_PARSE_PATTERNS: list[tuple[str, str, str]] = [
    ("room_center", "i am in the middle of the ", ""),
    ("spot_door", "i am standing in the doorway to the ", ""),
    ("spot_door", "i am in the door to the ", ""),
    ("near_landmark", "right beside me is a ", ""),
    ("near_landmark", "the ", " is right beside me"),
    ("cardinal", "i am in the ", " part of the floor"),
    ("cardinal", "somewhere in the ", " half"),
    ("landmark", "i can see a ", ""),
    ("landmark", "there is a ", " here"),
    ("landmark", "next to me is a ", ""),
    ("neighbor", "my room is next to the ", ""),
    ("neighbor", "there is a ", " through the door"),
    ("room", "i am in the ", ""),
    ("room", "this looks like a ", ""),
    ("room", "i am standing in a ", ""),
]


def parse_facts(turns: list[tuple[str, str]]) -> list[list[Fact]]:
    """Invert the template grammar: observer utterances back to per-turn facts.

    Exact for generator output (the grammar is fixed); raises on text the
    grammar cannot have produced, e.g. paraphrased dialogs.
    """
    out: list[list[Fact]] = []
    for _, observer in turns:
        facts: list[Fact] = []
        for clause in observer.split(" and "):
            if clause in _PARSE_EXACT:
                facts.extend(_PARSE_EXACT[clause])
                continue
            for kind, prefix, suffix in _PARSE_PATTERNS:
                if clause.startswith(prefix) and (clause.endswith(suffix) if suffix else True):
                    end = len(clause) - len(suffix) if suffix else len(clause)
                    value = clause[len(prefix) : end]
                    if not value or " " in value:
                        continue  # labels are single words; try a later pattern
                    if kind == "room_center":
                        facts.append(Fact("room", value))
                        facts.append(Fact("spot_center"))
                    else:
                        facts.append(Fact(kind, value))
                    break
            else:
                raise ValueError(f"clause {clause!r} does not match the template grammar")
        out.append(facts)
    return out


def generate_dialog(
    world: WorldMap,
    seed: int,
    t_turns: int,
    vocab: Vocabulary,
    n_tokens: int = 32,
    sample_id: str | None = None,
) -> GeneratedDialog:
    """Draw a dialog of exactly `t_turns` turns whose facts pin the target node."""
    if not 1 <= t_turns <= MAX_TURNS:
        raise GenerationError(f"turn count {t_turns} outside [1, {MAX_TURNS}]")
    label_counts: dict[str, int] = {}
    for room in world.rooms:
        label_counts[room.label] = label_counts.get(room.label, 0) + 1
    if t_turns >= 2 and max(label_counts.values()) < 2:
        raise GenerationError("no duplicated room label: ambiguity schedule infeasible")

    rng = np.random.default_rng([seed, zlib.crc32(world.world_id.encode())])

    room_sets: dict[str, frozenset[int]] = {}
    for label in label_counts:
        room_sets[label] = frozenset(consistent_nodes(world, [Fact("room", label)]))

    if t_turns == 1:
        # single turn: "middle of the <label>" pins the center of a
        # uniquely-labeled room
        candidates = [ri for ri, room in enumerate(world.rooms) if label_counts[room.label] == 1]
        if not candidates:
            raise GenerationError("single-turn dialog needs a uniquely-labeled room")
        target = candidates[int(rng.integers(0, len(candidates)))]
        facts = [Fact("room", world.rooms[target].label), Fact("spot_center")]
        if consistent_nodes(world, facts) != [target]:
            raise GenerationError("single-turn schedule failed its own filter")
        facts_per_turn = [facts]
    else:
        eligible = [
            nid
            for nid in range(len(world.nodes))
            if label_counts[world.room_of_node(nid).label] >= 2
        ]
        facts_per_turn = None
        for pick in rng.permutation(len(eligible)):
            target = eligible[int(pick)]
            label = world.room_of_node(target).label
            pool = _facts_true_of(world, target)
            fact_sets = {f: frozenset(consistent_nodes(world, [f])) for f in pool}
            rest = _search_schedule(fact_sets, pool, room_sets[label], target, t_turns, rng)
            if rest is not None:
                facts_per_turn = [[Fact("room", label)]] + rest
                break
        if facts_per_turn is None:
            raise GenerationError(
                f"no feasible {t_turns}-turn schedule in world {world.world_id} at seed {seed}"
            )

    flat: list[Fact] = []
    per_turn_sets: list[list[int]] = []
    for turn_facts in facts_per_turn:
        flat.extend(turn_facts)
        per_turn_sets.append(consistent_nodes(world, flat))
    for prev, cur in zip(per_turn_sets, per_turn_sets[1:]):
        if not set(cur) <= set(prev):
            raise GenerationError("consistent set grew between turns")
    if per_turn_sets[-1] != [target]:
        raise GenerationError("schedule did not isolate the target")

    turns = [render_turn(f, rng) for f in facts_per_turn]
    tokens = [tokenize_turn(t, vocab, n_tokens).tolist() for t in turns]
    sample = DialogSample(
        sample_id=sample_id or f"{world.world_id}-s{seed:08d}",
        world_id=world.world_id,
        turns=turns,
        turn_tokens=tokens,
        observer_nodes=[target] * t_turns,
        final_node=target,
        final_pixel=world.nodes[target],
    )
    return GeneratedDialog(sample=sample, facts_per_turn=facts_per_turn, consistent_per_turn=per_turn_sets)
