"""Dialog paraphrase providers for training-time text augmentation.

The rule-based provider substitutes filler-word synonyms and optionally
reorders clauses; labels, landmark names, and direction words are never
touched, and ground-truth nodes are never modified.  The remote provider
posts the dialog to a completion endpoint and falls back to the original
sample on any failure (augmentation must never break a training run).
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import requests

from .dialogs import DialogSample
from .vocab import Vocabulary, tokenize_turn

logger = logging.getLogger(__name__)

# safe filler-word synonyms; semantic words (labels, directions) are excluded
DEFAULT_SYNONYMS = {
    "see": "spot",
    "here": "nearby",
    "part": "section",
    "floor": "level",
    "notable": "interesting",
    "standing": "right now",
}

# clause reorderings keyed by utterance prefix
_REORDER_RULES = [
    ("i am in the ", lambda rest: f"the {rest} is where i am"),
    ("i can see a ", lambda rest: f"a {rest} is visible from here"),
    ("there is a ", lambda rest: f"i can tell there is a {rest}"),
]


class ParaphraseError(RuntimeError):
    pass


@dataclass
class RuleBasedParaphraser:
    synonyms: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_SYNONYMS))
    reorder: bool = True

    def rewrite_dialog(self, turns: list[tuple[str, str]], rng: np.random.Generator) -> list[tuple[str, str]]:
        return [(self._rewrite(loc, rng), self._rewrite(obs, rng)) for loc, obs in turns]

    def _rewrite(self, text: str, rng: np.random.Generator) -> str:
        if self.reorder:
            for prefix, rule in _REORDER_RULES:
                if text.startswith(prefix) and rng.random() < 0.5:
                    text = rule(text[len(prefix) :])
                    break
        words = [self.synonyms.get(w, w) for w in text.split()]
        return " ".join(words)


@dataclass
class RemoteParaphraser:
    url: str
    credential_env: str = "TURNLOC_PARAPHRASE_TOKEN"
    timeout_seconds: float = 10.0
    temperature: float = 0.6
    top_p: float = 0.5

    def rewrite_dialog(self, turns: list[tuple[str, str]], rng: np.random.Generator) -> list[tuple[str, str]]:
        payload = {
            "prompt": "Paraphrase the dialog",
            "dialog": [list(t) for t in turns],
            "temperature": self.temperature,
            "top_p": self.top_p,
        }
        headers = {}
        token = os.environ.get(self.credential_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout_seconds)
        resp.raise_for_status()
        body = resp.json()
        rewritten = [tuple(t) for t in body["dialog"]]
        if len(rewritten) != len(turns):
            raise ParaphraseError("remote provider changed the turn count")
        return rewritten


def paraphrase(
    sample: DialogSample,
    provider: RuleBasedParaphraser | RemoteParaphraser,
    seed: int,
    vocab: Vocabulary,
    n_tokens: int | None = None,
) -> DialogSample:
    """Rewrite utterances only; nodes, pixels, and turn count are preserved.

    Remote failures are logged and the original sample is returned unchanged.
    """
    rng = np.random.default_rng(seed)
    try:
        turns = provider.rewrite_dialog(sample.turns, rng)
    except Exception as exc:  # network/JSON/contract errors must not kill training
        logger.warning("paraphrase skipped (%s); keeping original dialog", exc)
        return sample
    n = n_tokens or len(sample.turn_tokens[0])
    tokens = [tokenize_turn(t, vocab, n).tolist() for t in turns]
    return DialogSample(
        sample_id=sample.sample_id,
        world_id=sample.world_id,
        turns=turns,
        turn_tokens=tokens,
        observer_nodes=list(sample.observer_nodes),
        final_node=sample.final_node,
        final_pixel=sample.final_pixel,
    )
