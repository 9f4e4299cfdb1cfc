from .worlds import (
    LANDMARK_LABELS,
    ROOM_LABELS,
    GenerationError,
    Landmark,
    Room,
    WorldMap,
    WorldParams,
    generate_world,
    make_demo_world,
    rasterize,
)
from .vocab import Vocabulary, build_vocabulary, tokenize_turn, single_shot_tokens
from .dialogs import (
    DialogSample,
    Fact,
    GeneratedDialog,
    consistent_nodes,
    fact_holds,
    generate_dialog,
)
from .paraphrase import ParaphraseError, RemoteParaphraser, RuleBasedParaphraser, paraphrase
from .splits import DatasetManifest, SplitCounts, build_splits, load_manifest, load_samples, load_world, write_dataset

__all__ = [
    "LANDMARK_LABELS",
    "ROOM_LABELS",
    "GenerationError",
    "Landmark",
    "Room",
    "WorldMap",
    "WorldParams",
    "generate_world",
    "make_demo_world",
    "rasterize",
    "Vocabulary",
    "build_vocabulary",
    "tokenize_turn",
    "single_shot_tokens",
    "DialogSample",
    "Fact",
    "GeneratedDialog",
    "consistent_nodes",
    "fact_holds",
    "generate_dialog",
    "ParaphraseError",
    "RemoteParaphraser",
    "RuleBasedParaphraser",
    "paraphrase",
    "DatasetManifest",
    "SplitCounts",
    "build_splits",
    "write_dataset",
    "load_manifest",
    "load_samples",
    "load_world",
]
