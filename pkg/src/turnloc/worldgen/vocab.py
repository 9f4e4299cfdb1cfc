"""Token vocabulary and turn tokenization for the template dialogs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .worlds import LANDMARK_LABELS, ROOM_LABELS

PAD, UNK, CLS, SEP, LOC, OBS = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[LOC]", "[OBS]"
SPECIALS = [PAD, UNK, CLS, SEP, LOC, OBS]

# every word the template grammar (and the rule-based paraphraser) can emit
_TEMPLATE_WORDS = """
a am an and anything are adjacent be beside can describe do door doorway down
east exactly floor from half here i in interesting is it left level looks like
map middle me my near nearby next north nothing notable now objects of on part
place right room says section see sees somewhere south spot standing tell the
there this through to visible west what where which you your
""".split()

DIRECTIONS = ["north", "south", "east", "west"]


@dataclass
class Vocabulary:
    tokens: list[str]

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        if self.tokens[0] != PAD:
            raise ValueError("token 0 must be [PAD]")
        if len(self.tokens) > 512:
            raise ValueError(f"vocabulary too large: {len(self.tokens)}")

    def __len__(self) -> int:
        return len(self.tokens)

    def encode_word(self, word: str) -> int:
        return self.index.get(word, self.index[UNK])

    def decode(self, token_id: int) -> str:
        return self.tokens[token_id]


def build_vocabulary() -> Vocabulary:
    words = sorted(set(_TEMPLATE_WORDS) | set(ROOM_LABELS) | set(LANDMARK_LABELS) | set(DIRECTIONS))
    return Vocabulary(tokens=SPECIALS + words)


def _turn_segment(locator: str, observer: str, vocab: Vocabulary, budget: int) -> list[int]:
    """[LOC] locator [SEP] [OBS] observer [SEP], trimmed to fit `budget` ids.

    Trailing observer words are dropped first, then trailing locator words.
    """
    loc_ids = [vocab.encode_word(w) for w in locator.split()]
    obs_ids = [vocab.encode_word(w) for w in observer.split()]
    words_budget = budget - 4  # the four structural markers
    if len(loc_ids) + len(obs_ids) > words_budget:
        obs_ids = obs_ids[: max(0, words_budget - len(loc_ids))]
    if len(loc_ids) > words_budget:
        loc_ids = loc_ids[:words_budget]
    sep = vocab.index[SEP]
    return [vocab.index[LOC], *loc_ids, sep, vocab.index[OBS], *obs_ids, sep]


def tokenize_turn(turn: tuple[str, str], vocab: Vocabulary, n: int) -> np.ndarray:
    """Fixed-length id sequence [CLS] [LOC] ... [SEP] [OBS] ... [SEP] [PAD]*."""
    if n < 6:
        raise ValueError(f"token length {n} cannot hold the structural markers")
    ids = [vocab.index[CLS]] + _turn_segment(turn[0], turn[1], vocab, n - 1)
    ids = ids + [vocab.index[PAD]] * (n - len(ids))
    return np.asarray(ids[:n], dtype=np.int64)


def single_shot_tokens(turns: list[tuple[str, str]], vocab: Vocabulary, n: int, cap: int) -> np.ndarray:
    """Whole-dialog sequence: [CLS] then per-turn segments, padded to min(n*T, cap).

    For T=1 this reproduces tokenize_turn exactly, so single-shot and
    one-turn multi-shot runs are bitwise comparable.
    """
    total = min(n * max(1, len(turns)), cap)
    ids = [vocab.index[CLS]]
    for turn in turns:
        remaining = total - len(ids)
        if remaining <= 4:
            break
        seg = _turn_segment(turn[0], turn[1], vocab, min(remaining, n - 1))
        ids.extend(seg)
    ids = ids + [vocab.index[PAD]] * (total - len(ids))
    return np.asarray(ids[:total], dtype=np.int64)
